"""Sources, the heralded concentrator and its count-subtraction verification.

Beam naming follows the figures: input pairs (1,2) and (3,4); first PBS pair
outputs 1',2',3',4'; 1' and 4' become 1'' and 4'' after the pi/4 plates and
are split into x,y and w,z. Beams 2' and 3' carry the heralded pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .detect import (
    ClickPattern,
    CountTable,
    DetectorSpec,
    click_probability,
    condition,
    detector,
    expected_counts,
    fidelity,
    sample,
)
from .elements import (
    Circuit,
    Relabel,
    apply_circuit,
    apply_element,
    build_circuit,
    hwp,
    pbs,
    phase_flip,
    phase_shifter,
)
from .fock import (
    Ensemble,
    FockError,
    FockState,
    ModeId,
    StateLike,
    as_ensemble,
    make_state,
    normalize,
    tensor,
)

QUARTER_PHASES = (0.0, math.pi / 2, -math.pi / 2, math.pi)
SOURCE_KINDS = ("raw1", "u1", "u2", "spdc_mixture", "spdc_coherent")
OUTPUT_BEAMS = ("2'", "3'")
CONCLUSION_SIGMAS = 5.0
# share of each source component in the SPDC input, from amplitudes 2 : sqrt3 : sqrt3
SPDC_SHARES = {"raw1": 0.4, "u1": 0.3, "u2": 0.3}


class SchemeError(FockError):
    pass


@dataclass(frozen=True)
class RawStateParams:
    r: float = 1.0
    phi: float = 0.0

    def __post_init__(self):
        if not self.r > 0:
            raise SchemeError("r must be > 0")


# -- states --------------------------------------------------------------------


def _create(monomials: Iterable[tuple[complex, Sequence[ModeId]]]) -> FockState:
    """Apply a polynomial in creation operators to the vacuum."""
    terms = []
    for coef, ops in monomials:
        counts: dict[ModeId, int] = {}
        for m in ops:
            counts[m] = counts.get(m, 0) + 1
        amp = coef * math.sqrt(math.prod(math.factorial(n) for n in counts.values()))
        terms.append((counts, amp))
    return make_state(terms)


def _pair_ops(a: str, b: str, p: RawStateParams) -> list:
    """a†_aH a†_bH + r e^{i phi} a†_aV a†_bV as a monomial list."""
    return [
        (1.0, (ModeId(a, "H"), ModeId(b, "H"))),
        (p.r * np.exp(1j * p.phi), (ModeId(a, "V"), ModeId(b, "V"))),
    ]


def _times(x: list, y: list) -> list:
    return [(cx * cy, ox + oy) for cx, ox in x for cy, oy in y]


def pair_state(a: str, b: str, p: RawStateParams) -> FockState:
    return normalize(_create(_pair_ops(a, b, p)))


def raw_state(p: RawStateParams) -> FockState:
    """Normalized product of two identical partially entangled pairs on (1,2), (3,4)."""
    return tensor(pair_state("1", "2", p), pair_state("3", "4", p))


def double_pair(a: str, b: str, p: RawStateParams) -> FockState:
    """Second-order emission (pair operator squared) on beams a, b, normalized."""
    ops = _pair_ops(a, b, p)
    return normalize(_create(_times(ops, ops)))


def spdc_components(p: RawStateParams) -> dict[str, FockState]:
    return {"raw1": raw_state(p), "u1": double_pair("1", "2", p), "u2": double_pair("3", "4", p)}


def spdc_input(p: RawStateParams) -> FockState:
    """Coherent superposition 2|raw1> + sqrt3|u1> + sqrt3|u2>, normalized."""
    c = spdc_components(p)
    s = 2 * c["raw1"] + math.sqrt(3) * c["u1"] + math.sqrt(3) * c["u2"]
    return normalize(s)


def dephase(state: FockState, reference_beam: str, phases: Sequence[float]) -> Ensemble:
    """Equal-weight mixture over a phase shifter on ``reference_beam``."""
    phases = list(phases)
    if not phases:
        raise SchemeError("phases must be non-empty")
    w = 1 / len(phases)
    return Ensemble(tuple((w, apply_element(state, phase_shifter(reference_beam, t))) for t in phases))


def make_source(
    kind: str, p: RawStateParams = RawStateParams(), phases: Sequence[float] = QUARTER_PHASES, phase_beam: str = "1"
) -> StateLike:
    """Source state by kind. ``u1``/``u2`` are the blocked-beam calibration inputs."""
    if kind not in SOURCE_KINDS:
        raise SchemeError(f"unknown source kind {kind!r}")
    if kind == "spdc_coherent":
        return spdc_input(p)
    if kind == "spdc_mixture":
        return dephase(spdc_input(p), phase_beam, phases)
    return spdc_components(p)[kind]


def bell(kind: str, a: str = "2'", b: str = "3'") -> FockState:
    """Bell state on beams a, b; kind in {phi+, phi-, psi+, psi-}."""
    s = -1.0 if kind.endswith("-") else 1.0
    if kind.startswith("phi"):
        terms = [({f"{a}H": 1, f"{b}H": 1}, 1.0), ({f"{a}V": 1, f"{b}V": 1}, s)]
    elif kind.startswith("psi"):
        terms = [({f"{a}H": 1, f"{b}V": 1}, 1.0), ({f"{a}V": 1, f"{b}H": 1}, s)]
    else:
        raise SchemeError(f"unknown Bell state {kind!r}")
    return normalize(make_state(terms))


# -- the concentrator ------------------------------------------------------------


def fig1_circuit(convention: str = "permutation") -> Circuit:
    """pi/2 plates on 3,4; PBS pair; pi/4 plates on 1',4'; PBS pair onto x,y and w,z.

    The second PBS pair has unused vacuum input ports ``vac1`` and ``vac4``.
    """
    steps = [
        hwp("3", math.pi / 2),
        hwp("4", math.pi / 2),
        pbs("1", "3", "1'", "3'", convention),
        pbs("2", "4", "2'", "4'", convention),
        hwp("1'", math.pi / 4),
        hwp("4'", math.pi / 4),
        Relabel("1'", "1''"),
        Relabel("4'", "4''"),
        pbs("1''", "vac1", "x", "y", convention),
        pbs("4''", "vac4", "w", "z", convention),
    ]
    return build_circuit(steps)


def fig1_detectors(variant: str = "two", eta: float = 1.0) -> list[DetectorSpec]:
    if variant == "two":
        beams = ("x", "w")
    elif variant == "four":
        beams = ("x", "y", "z", "w")
    else:
        raise SchemeError(f"detector set must be 'two' or 'four', got {variant!r}")
    return [detector(f"D{b}", b, eta=eta) for b in beams]


# herald -> Bell state found on 2',3'
HERALDS = {"two": {("Dx", "Dw"): "phi+"}, "four": {
    ("Dx", "Dw"): "phi+",
    ("Dy", "Dz"): "phi+",
    ("Dx", "Dz"): "phi-",
    ("Dy", "Dw"): "phi-",
}}


@dataclass
class ConcentrationResult:
    params: RawStateParams
    detector_set: str
    eta: float
    probabilities: dict = field(default_factory=dict)
    conditionals: dict = field(default_factory=dict)
    fidelities: dict = field(default_factory=dict)

    @property
    def success(self) -> float:
        return sum(self.probabilities.values())

    @property
    def fidelity(self) -> float:
        """Success-weighted fidelity with phi+ after local correction."""
        if self.success == 0:
            return 0.0
        return sum(self.probabilities[k] * self.fidelities[k] for k in self.probabilities) / self.success


def concentrate(p: RawStateParams, detector_set: str = "two", eta: float = 1.0) -> ConcentrationResult:
    dets = fig1_detectors(detector_set, eta)
    out = apply_circuit(raw_state(p), fig1_circuit())
    target = bell("phi+")
    res = ConcentrationResult(p, detector_set, eta)
    for clicked, found in HERALDS[detector_set].items():
        pattern = ClickPattern.of(dets, clicked)
        prob = click_probability(out, dets, pattern)
        cond = condition(out, dets, pattern, OUTPUT_BEAMS)
        if found == "phi-":
            flip = phase_flip("3'")
            cond = cond.map(lambda s: apply_element(s, flip))
        res.probabilities[pattern.label] = prob
        res.conditionals[pattern.label] = cond
        res.fidelities[pattern.label] = fidelity(cond, target)
    return res


def success_probability(r: float, detector_set: str = "two", eta: float = 1.0) -> float:
    return concentrate(RawStateParams(r, 0.0), detector_set, eta).success


# -- verification set-up ---------------------------------------------------------

FIG2_PAIRS = (("D2H", "D3V"), ("D2V", "D3H"), ("D2H", "D3H"), ("D2V", "D3V"))


def fig2_circuit(hwp_inserted: bool = False, convention: str = "permutation") -> Circuit:
    c = fig1_circuit(convention)
    if hwp_inserted:
        c = c.then(hwp("2'", math.pi / 4), hwp("3'", math.pi / 4))
    return c


def fig2_detectors(eta: float = 1.0) -> list[DetectorSpec]:
    return [
        detector("Dx", "x", eta=eta),
        detector("Dw", "w", eta=eta),
        detector("D2H", "2'", "H", eta=eta),
        detector("D2V", "2'", "V", eta=eta),
        detector("D3H", "3'", "H", eta=eta),
        detector("D3V", "3'", "V", eta=eta),
    ]


def fig2_patterns(detectors: Sequence[DetectorSpec] | None = None) -> list[ClickPattern]:
    """The four 4-fold coincidences (Dx, Dw, D2*, D3*) in reporting order."""
    dets = detectors or fig2_detectors()
    return [ClickPattern.of(dets, ("Dx", "Dw") + pair) for pair in FIG2_PAIRS]


def fig2_output(source: StateLike, hwp_inserted: bool) -> StateLike:
    circuit = fig2_circuit(hwp_inserted)
    if isinstance(source, Ensemble):
        return source.map(lambda s: apply_circuit(s, circuit))
    return apply_circuit(source, circuit)


def fig2_run(
    source: str,
    trials: int,
    hwp_inserted: bool = False,
    seed: int = 0,
    exact: bool = False,
    p: RawStateParams = RawStateParams(),
    eta: float = 1.0,
) -> CountTable:
    """4-fold coincidence counts of one verification run.

    ``exact`` gives expected counts ``trials * probability`` instead of a draw.
    """
    if trials < 1:
        raise SchemeError("trials must be >= 1")
    dets = fig2_detectors(eta)
    state = fig2_output(make_source(source, p), hwp_inserted)
    table = expected_counts(state, dets, trials) if exact else sample(state, dets, trials, seed)
    return table.restrict(fig2_patterns(dets))


RUN_ORDER = ("u1_bare", "u2_bare", "mixture_bare", "u1_hwp", "u2_hwp", "mixture_hwp")


@dataclass
class ProtocolReport:
    trials: int
    seed: int
    exact: bool
    params: RawStateParams
    runs: dict
    run_trials: dict
    net: dict
    conclusion1: bool
    conclusion2: bool
    n_expected: float

    def sigma(self, count: float) -> float:
        return 0.0 if self.exact else math.sqrt(max(count, 0))

    def table(self, kind: str) -> list[dict]:
        """Rows per pattern for ``kind`` in {bare, hwp}: calibration, mixture and net counts."""
        rows = []
        for p in fig2_patterns():
            u1 = self.runs[f"u1_{kind}"].count(p)
            u2 = self.runs[f"u2_{kind}"].count(p)
            mx = self.runs[f"mixture_{kind}"].count(p)
            net, sig = self.net[kind][p.label]
            rows.append({
                "pattern": p.label, "u1": u1, "u2": u2, "mixture": mx, "net": net, "sigma": sig,
                "mixture_over_N": mx / self.n_expected, "net_over_N": net / self.n_expected,
            })
        return rows

    def to_dict(self) -> dict:
        runs = {}
        for name in RUN_ORDER:
            t = self.runs[name]
            runs[name] = {
                p.label: {"count": t.count(p), "prob": t.probability(p), "sigma": self.sigma(t.count(p))}
                for p in fig2_patterns()
            }
        net = {
            kind: {label: {"count": c, "sigma": s} for label, (c, s) in entries.items()}
            for kind, entries in self.net.items()
        }
        return {
            "trials": self.trials,
            "seed": self.seed,
            "exact": self.exact,
            "r": self.params.r,
            "phi": self.params.phi,
            "run_trials": dict(self.run_trials),
            "runs": runs,
            "net": net,
            "hwp_ratio": {row["pattern"]: row["mixture_over_N"] for row in self.table("hwp")},
            "conclusion1": self.conclusion1,
            "conclusion2": self.conclusion2,
            "N_expected": self.n_expected,
        }


def _concentrated(entries: dict, good: Sequence[str], bad: Sequence[str], tol: float) -> bool:
    """True iff the net counts sit on ``good`` and vanish on ``bad`` within uncertainty."""
    ok_bad = all(abs(entries[b][0]) <= CONCLUSION_SIGMAS * entries[b][1] + tol for b in bad)
    ok_good = all(entries[g][0] > CONCLUSION_SIGMAS * entries[g][1] + tol for g in good)
    return ok_bad and ok_good


def fig2_protocol(
    trials_total: int,
    seed: int = 0,
    exact: bool = False,
    p: RawStateParams = RawStateParams(),
    eta: float = 1.0,
) -> ProtocolReport:
    """Calibration runs on the blocked sources, the mixture run, and net counts.

    The u1/u2 runs get ``0.3 * trials_total`` inputs each, matching their
    share of the mixture, so subtracting them leaves the raw-state counts.
    """
    if trials_total < 1000:
        raise SchemeError("trials_total must be >= 1000")
    n_cal = round(SPDC_SHARES["u1"] * trials_total)
    run_trials = {}
    runs = {}
    seeds = np.random.SeedSequence(seed).generate_state(len(RUN_ORDER))
    for name, sub_seed in zip(RUN_ORDER, seeds):
        src, kind = name.split("_")
        source = "spdc_mixture" if src == "mixture" else src
        n = trials_total if src == "mixture" else n_cal
        run_trials[name] = n
        runs[name] = fig2_run(source, n, kind == "hwp", int(sub_seed), exact, p, eta)

    patterns = fig2_patterns()
    net = {}
    for kind in ("bare", "hwp"):
        entries = {}
        for pat in patterns:
            c = [runs[f"{s}_{kind}"].count(pat) for s in ("mixture", "u1", "u2")]
            sigma = 0.0 if exact else math.sqrt(sum(max(x, 0) for x in c))
            entries[pat.label] = (c[0] - c[1] - c[2], sigma)
        net[kind] = entries

    labels = [pat.label for pat in patterns]
    good, bad = labels[2:], labels[:2]
    tol = 1e-9 * trials_total
    cal = runs["u1_bare"]
    n_expected = cal.probability(patterns[0]) * run_trials["u1_bare"]
    return ProtocolReport(
        trials=trials_total,
        seed=seed,
        exact=exact,
        params=p,
        runs=runs,
        run_trials=run_trials,
        net=net,
        conclusion1=_concentrated(net["bare"], good, bad, tol),
        conclusion2=_concentrated(net["hwp"], good, bad, tol),
        n_expected=n_expected,
    )
