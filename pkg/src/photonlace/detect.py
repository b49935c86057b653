"""Photon detectors, click statistics and heralded (conditional) states.

Detection is modeled per photon: each photon reaching a detector of
efficiency ``eta`` is registered independently with probability ``eta``. A
threshold detector clicks when at least one photon registers; a
number-resolving one reports how many did. Both POVMs are diagonal in the
number basis of the monitored modes, so probabilities and conditional states
follow from grouping the basis terms of a state by their monitored
occupation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fock import (
    Ensemble,
    FockError,
    FockState,
    ModeId,
    StateLike,
    as_ensemble,
    inner_product,
    modes_of,
)

PROB_FLOOR = 1e-15
RESOLUTIONS = ("threshold", "pnr")


class DetectionError(FockError):
    pass


@dataclass(frozen=True)
class DetectorSpec:
    id: str
    modes: frozenset
    resolution: str = "threshold"
    efficiency: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "modes", frozenset(self.modes))
        if not self.modes:
            raise DetectionError(f"detector {self.id} monitors no modes")
        if self.resolution not in RESOLUTIONS:
            raise DetectionError(f"unknown resolution {self.resolution!r}")
        if not 0 < self.efficiency <= 1:
            raise DetectionError(f"efficiency must be in (0, 1], got {self.efficiency}")

    def response(self, n: int) -> dict[int, float]:
        """Distribution of the reported value given ``n`` incident photons."""
        if n == 0:
            return {0: 1.0}
        eta = self.efficiency
        if self.resolution == "threshold":
            miss = (1 - eta) ** n
            return {0: miss, 1: 1 - miss} if miss else {1: 1.0}
        return {
            k: math.comb(n, k) * eta**k * (1 - eta) ** (n - k)
            for k in range(n + 1)
            if eta < 1 or k == n
        }

    def with_efficiency(self, eta: float) -> "DetectorSpec":
        return DetectorSpec(self.id, self.modes, self.resolution, eta)


def detector(
    id: str, beam: str, pol: str | None = None, resolution: str = "threshold", eta: float = 1.0
) -> DetectorSpec:
    """Detector on a whole beam (``pol=None``) or on one polarization of it."""
    modes = modes_of(beam) if pol in (None, "any") else (ModeId(beam, pol),)
    return DetectorSpec(id, frozenset(modes), resolution, eta)


def check_disjoint(detectors: Sequence[DetectorSpec]) -> None:
    seen: dict[ModeId, str] = {}
    ids = set()
    for d in detectors:
        if d.id in ids:
            raise DetectionError(f"duplicate detector id {d.id!r}")
        ids.add(d.id)
        for m in d.modes:
            if m in seen:
                raise DetectionError(f"detectors {seen[m]} and {d.id} overlap on mode {m}")
            seen[m] = d.id


@dataclass(frozen=True, order=True)
class ClickPattern:
    """Reported value per detector, in detector declaration order.

    Threshold detectors report 0 (silent) or 1 (clicked); number-resolving
    ones report a photon count.
    """

    values: tuple
    ids: tuple = field(compare=False)

    @classmethod
    def of(cls, detectors: Sequence[DetectorSpec], clicked: Iterable[str] = (), counts: Mapping[str, int] | None = None):
        clicked = set(clicked)
        counts = dict(counts or {})
        ids = tuple(d.id for d in detectors)
        unknown = (clicked | set(counts)) - set(ids)
        if unknown:
            raise DetectionError(f"pattern names unknown detector {sorted(unknown)[0]!r}")
        return cls(tuple(counts.get(i, 1 if i in clicked else 0) for i in ids), ids)

    @property
    def clicks(self) -> dict[str, int]:
        return dict(zip(self.ids, self.values))

    @property
    def clicked(self) -> tuple:
        return tuple(i for i, v in zip(self.ids, self.values) if v)

    @property
    def label(self) -> str:
        parts = [i if v == 1 else f"{i}:{v}" for i, v in zip(self.ids, self.values) if v]
        return "+".join(parts) or "none"

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class MeasurementOutcome:
    pattern: ClickPattern
    probability: float
    conditional: Ensemble | None


def _monitor_index(detectors: Sequence[DetectorSpec]) -> dict[ModeId, int]:
    return {m: i for i, d in enumerate(detectors) for m in d.modes}


def _incident(occ, index: Mapping[ModeId, int], n_det: int) -> tuple:
    counts = [0] * n_det
    for m, n in occ:
        i = index.get(m)
        if i is not None:
            counts[i] += n
    return tuple(counts)


def _likelihood(detectors, incident: tuple, values: tuple) -> float:
    p = 1.0
    for d, n, v in zip(detectors, incident, values):
        p *= d.response(n).get(v, 0.0)
        if p == 0:
            break
    return p


def _check_pattern(detectors, pattern: ClickPattern):
    if pattern.ids != tuple(d.id for d in detectors):
        raise DetectionError("pattern does not cover exactly the declared detectors")
    for d, v in zip(detectors, pattern.values):
        if d.resolution == "threshold" and v not in (0, 1):
            raise DetectionError(f"threshold detector {d.id} cannot report {v}")


def click_probability(x: StateLike, detectors: Sequence[DetectorSpec], pattern: ClickPattern) -> float:
    check_disjoint(detectors)
    _check_pattern(detectors, pattern)
    index = _monitor_index(detectors)
    total = 0.0
    for w, s in as_ensemble(x):
        for occ, amp in s.terms.items():
            inc = _incident(occ, index, len(detectors))
            total += w * abs(amp) ** 2 * _likelihood(detectors, inc, pattern.values)
    return total


def _condition_modes(ens: Ensemble, detectors, pattern: ClickPattern, keep: frozenset):
    index = _monitor_index(detectors)
    if keep & set(index):
        raise DetectionError("kept modes overlap monitored modes")
    groups: list[tuple[float, dict]] = []
    for w, s in ens:
        by_rest: dict[tuple, dict] = {}
        for occ, amp in s.terms.items():
            kept = tuple(p for p in occ if p[0] in keep)
            rest = tuple(p for p in occ if p[0] not in keep)
            by_rest.setdefault(rest, {})[kept] = amp
        for rest, sub in by_rest.items():
            f = _likelihood(detectors, _incident(rest, index, len(detectors)), pattern.values)
            if f > 0:
                groups.append((w * f, sub))
    members = []
    total = 0.0
    for wf, sub in groups:
        n2 = sum(abs(a) ** 2 for a in sub.values())
        p = wf * n2
        if p <= 0:
            continue
        total += p
        norm = math.sqrt(n2)
        members.append((p, FockState({k: v / norm for k, v in sub.items()}, keep)))
    if total <= PROB_FLOOR:
        raise DetectionError(f"impossible outcome {pattern.label}")
    return total, Ensemble(tuple((p / total, s) for p, s in members))


def condition(
    x: StateLike, detectors: Sequence[DetectorSpec], pattern: ClickPattern, keep: Iterable[str]
) -> Ensemble:
    """Normalized state of the ``keep`` beams given that ``pattern`` was observed.

    Everything outside the kept beams is traced out. One ensemble member is
    produced per pattern-consistent occupation of the discarded modes.
    """
    check_disjoint(detectors)
    _check_pattern(detectors, pattern)
    keep_modes = frozenset(m for b in keep for m in modes_of(b))
    return _condition_modes(as_ensemble(x), detectors, pattern, keep_modes)[1]


def fidelity(e: StateLike, target: FockState) -> float:
    return float(sum(w * abs(inner_product(target, s)) ** 2 for w, s in as_ensemble(e)))


def outcome_distribution(
    x: StateLike, detectors: Sequence[DetectorSpec], conditionals: bool = True
) -> list[MeasurementOutcome]:
    """Every pattern with probability above the floor, in canonical order.

    Conditionals live on all registry modes not monitored by any detector.
    """
    check_disjoint(detectors)
    ens = as_ensemble(x)
    index = _monitor_index(detectors)
    probs: dict[tuple, float] = {}
    for w, s in ens:
        weights: dict[tuple, float] = {}
        for occ, amp in s.terms.items():
            inc = _incident(occ, index, len(detectors))
            weights[inc] = weights.get(inc, 0.0) + abs(amp) ** 2
        for inc, p in weights.items():
            for values, f in _joint_response(detectors, inc):
                probs[values] = probs.get(values, 0.0) + w * p * f
    ids = tuple(d.id for d in detectors)
    keep = frozenset(ens.modes) - set(index)
    out = []
    for values in sorted(probs):
        p = probs[values]
        if p <= PROB_FLOOR:
            continue
        pattern = ClickPattern(values, ids)
        cond = _condition_modes(ens, detectors, pattern, keep)[1] if conditionals else None
        out.append(MeasurementOutcome(pattern, p, cond))
    return out


def _joint_response(detectors, incident):
    joint = [((), 1.0)]
    for d, n in zip(detectors, incident):
        joint = [(vals + (v,), p * q) for vals, p in joint for v, q in d.response(n).items() if q > 0]
    return joint


@dataclass
class CountTable:
    """Counts (or expected counts) per click pattern.

    ``probabilities`` holds the exact pattern probabilities the counts were
    drawn from, when known.
    """

    detector_ids: tuple
    counts: dict
    probabilities: dict = field(default_factory=dict)
    trials: int = 0

    def patterns(self) -> list[ClickPattern]:
        return sorted(set(self.counts) | set(self.probabilities))

    def count(self, pattern: ClickPattern | str):
        return self.counts.get(self._key(pattern), 0)

    def probability(self, pattern: ClickPattern | str) -> float:
        return self.probabilities.get(self._key(pattern), 0.0)

    def _key(self, pattern):
        if isinstance(pattern, ClickPattern):
            return pattern
        for p in self.patterns():
            if p.label == pattern:
                return p
        return None

    def restrict(self, patterns: Sequence[ClickPattern]) -> "CountTable":
        return CountTable(
            self.detector_ids,
            {p: self.counts.get(p, 0) for p in patterns},
            {p: self.probabilities.get(p, 0.0) for p in patterns},
            self.trials,
        )

    @property
    def total(self):
        return sum(self.counts.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pattern", "count", "probability"])
        for p in self.patterns():
            w.writerow([p.label, self.counts.get(p, 0), repr(self.probabilities.get(p, 0.0))])
        return buf.getvalue()


def expected_counts(x: StateLike, detectors: Sequence[DetectorSpec], trials: int) -> CountTable:
    """Noise-free table: each pattern gets ``trials * probability``."""
    dist = outcome_distribution(x, detectors, conditionals=False)
    return CountTable(
        tuple(d.id for d in detectors),
        {o.pattern: trials * o.probability for o in dist},
        {o.pattern: o.probability for o in dist},
        trials,
    )


def sample(
    x: StateLike, detectors: Sequence[DetectorSpec], trials: int, seed: int, streams: int = 1
) -> CountTable:
    """Monte Carlo click counts.

    Each trial first draws an ensemble member by weight, then a pattern by
    inverse CDF over that member's outcome distribution in canonical order.
    Trials are split over ``streams`` generators seeded ``seed + i``.
    """
    if trials < 1:
        raise DetectionError("trials must be >= 1")
    if streams < 1:
        raise DetectionError("streams must be >= 1")
    ens = as_ensemble(x)
    weights = np.array([w for w, _ in ens])
    weights = weights / weights.sum()
    dists = [outcome_distribution(s, detectors, conditionals=False) for _, s in ens]
    patterns = sorted({o.pattern for d in dists for o in d})
    col = {p: i for i, p in enumerate(patterns)}
    cdfs = [np.cumsum([o.probability for o in d]) for d in dists]
    cols = [np.array([col[o.pattern] for o in d]) for d in dists]
    tally = np.zeros(len(patterns), dtype=np.int64)
    shares = [trials // streams + (1 if i < trials % streams else 0) for i in range(streams)]
    for i, n in enumerate(shares):
        if n == 0:
            continue
        rng = np.random.default_rng(seed + i)
        member = rng.choice(len(ens), size=n, p=weights) if len(ens) > 1 else np.zeros(n, dtype=int)
        for j in range(len(ens)):
            k = int(np.count_nonzero(member == j))
            if k == 0:
                continue
            u = rng.random(k) * cdfs[j][-1]
            idx = np.minimum(np.searchsorted(cdfs[j], u, side="right"), len(cdfs[j]) - 1)
            tally += np.bincount(cols[j][idx], minlength=len(patterns))
    exact = {}
    for (w, _), d in zip(ens, dists):
        for o in d:
            exact[o.pattern] = exact.get(o.pattern, 0.0) + w * o.probability
    return CountTable(
        tuple(d.id for d in detectors),
        {p: int(c) for p, c in zip(patterns, tally)},
        exact,
        trials,
    )
