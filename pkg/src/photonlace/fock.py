"""Sparse bosonic Fock states over labeled optical modes.

A state is a map from occupation vectors to complex amplitudes over the
orthonormal number basis. Occupation vectors are stored as sorted tuples of
``(ModeId, count)`` pairs with zero counts omitted, so two vectors compare
equal iff they describe the same photon configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

PRUNE = 1e-12
POLS = ("H", "V")


class FockError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ModeId:
    """A (spatial beam, polarization) pair.

    Ordering is lexicographic on the beam label, then H before V.
    """

    beam: str
    pol: str

    def __post_init__(self):
        if not isinstance(self.beam, str) or not self.beam:
            raise FockError(f"bad beam label {self.beam!r}")
        if self.pol not in POLS:
            raise FockError(f"polarization must be H or V, got {self.pol!r}")

    def __str__(self):
        return f"{self.beam}{self.pol}"

    @classmethod
    def parse(cls, text: str) -> "ModeId":
        """Inverse of ``str``: the last character is the polarization."""
        if len(text) < 2:
            raise FockError(f"bad mode {text!r}")
        return cls(text[:-1], text[-1])


def modes_of(beam: str) -> tuple[ModeId, ModeId]:
    return ModeId(beam, "H"), ModeId(beam, "V")


Occupation = tuple  # tuple[tuple[ModeId, int], ...], sorted, counts > 0
OccLike = Union[Occupation, Mapping]


def occupation(counts: OccLike) -> Occupation:
    """Canonicalize a mapping (or pair sequence) of mode -> photon count.

    Keys may be ``ModeId`` or strings like ``"1H"``.
    """
    items = counts.items() if isinstance(counts, Mapping) else counts
    acc: dict[ModeId, int] = {}
    for mode, n in items:
        if isinstance(mode, str):
            mode = ModeId.parse(mode)
        if int(n) != n or n < 0:
            raise FockError(f"photon count must be a non-negative integer, got {n!r}")
        if n:
            acc[mode] = acc.get(mode, 0) + int(n)
    return tuple(sorted(acc.items()))


def photon_number(occ: Occupation) -> int:
    return sum(n for _, n in occ)


def _prune(terms: Mapping[Occupation, complex]) -> dict[Occupation, complex]:
    return {k: complex(v) for k, v in terms.items() if abs(v) >= PRUNE}


@dataclass(frozen=True)
class FockState:
    """Immutable sparse state.

    ``modes`` is the registry of modes the state is defined over; it always
    contains the support of ``terms`` and may list extra vacuum modes. The
    registry holds whole beams, i.e. both polarizations of every beam in it.
    Build instances with :func:`make_state` unless a zero state is wanted.
    """

    terms: Mapping[Occupation, complex]
    modes: frozenset = field(default=frozenset())

    def __post_init__(self):
        terms = _prune(self.terms)
        beams = {m.beam for occ in terms for m, _ in occ} | {m.beam for m in self.modes}
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "modes", frozenset(m for b in beams for m in modes_of(b)))

    def __iter__(self) -> Iterator[tuple[Occupation, complex]]:
        return iter(sorted(self.terms.items(), key=lambda kv: _occ_key(kv[0])))

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        if not isinstance(other, FockState):
            return NotImplemented
        return self.modes == other.modes and self.terms == other.terms

    def __hash__(self):
        return hash((self.modes, frozenset(self.terms.items())))

    def __add__(self, other: "FockState") -> "FockState":
        terms = dict(self.terms)
        for occ, amp in other.terms.items():
            terms[occ] = terms.get(occ, 0) + amp
        return FockState(terms, self.modes | other.modes)

    def __sub__(self, other: "FockState") -> "FockState":
        return self + (-1) * other

    def __mul__(self, scalar: complex) -> "FockState":
        return FockState({k: scalar * v for k, v in self.terms.items()}, self.modes)

    __rmul__ = __mul__

    @property
    def norm2(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.terms.values()))

    @property
    def beams(self) -> frozenset:
        return frozenset(m.beam for m in self.modes)

    def amplitude(self, counts: OccLike) -> complex:
        return self.terms.get(occupation(counts), 0j)

    def photon_numbers(self) -> set[int]:
        return {photon_number(occ) for occ in self.terms}

    def with_modes(self, modes: Iterable[ModeId]) -> "FockState":
        """Same state with the registry extended by ``modes``."""
        return FockState(self.terms, self.modes | frozenset(modes))

    def project(self, predicate) -> "FockState":
        """Keep only the terms whose occupation satisfies ``predicate``."""
        return FockState({k: v for k, v in self.terms.items() if predicate(dict(k))}, self.modes)

    def to_text(self) -> str:
        return "\n".join(
            f"{amp.real!r}\t{amp.imag!r}\t" + ",".join(f"{m}:{n}" for m, n in occ)
            for occ, amp in self
        )

    @classmethod
    def from_text(cls, text: str) -> "FockState":
        terms = []
        for line in text.splitlines():
            if not line.strip():
                continue
            re_, im, modes = line.split("\t")
            counts = []
            for item in filter(None, modes.split(",")):
                m, n = item.rsplit(":", 1)
                counts.append((ModeId.parse(m), int(n)))
            terms.append((occupation(counts), complex(float(re_), float(im))))
        return make_state(terms)

    def __repr__(self):
        body = " + ".join(f"({a:.4g})|{','.join(f'{m}:{n}' for m, n in o)}>" for o, a in self)
        return f"FockState({body or '0'})"


def _occ_key(occ: Occupation):
    return tuple((m.beam, m.pol, n) for m, n in occ)


def make_state(terms: Iterable[tuple[OccLike, complex]], modes: Iterable[ModeId] = ()) -> FockState:
    """Build a state from ``(occupation, amplitude)`` pairs.

    Duplicate occupations are summed and near-zero amplitudes dropped.
    """
    terms = list(terms)
    if not terms:
        raise FockError("empty state")
    acc: dict[Occupation, complex] = {}
    registry = set(modes)
    for counts, amp in terms:
        occ = occupation(counts)
        registry.update(m for m, _ in occ)
        acc[occ] = acc.get(occ, 0) + complex(amp)
    state = FockState(acc, frozenset(registry))
    if not state.terms:
        raise FockError("empty state")
    return state


def vacuum(modes: Iterable[ModeId] = ()) -> FockState:
    return FockState({(): 1.0}, frozenset(modes))


def ket(*modes: str | ModeId, amplitude: complex = 1.0) -> FockState:
    """Basis state with one photon per listed mode (repeats add photons)."""
    counts: dict = {}
    for m in modes:
        m = ModeId.parse(m) if isinstance(m, str) else m
        counts[m] = counts.get(m, 0) + 1
    return make_state([(counts, amplitude)])


def inner_product(a: FockState, b: FockState) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if len(a.terms) <= len(b.terms):
        return sum((b.terms[k] * v.conjugate() for k, v in a.terms.items() if k in b.terms), 0j)
    return sum((a.terms[k].conjugate() * v for k, v in b.terms.items() if k in a.terms), 0j)


def tensor(a: FockState, b: FockState) -> FockState:
    clash = a.modes & b.modes
    if clash:
        raise FockError(f"mode collision on {', '.join(sorted(map(str, clash)))}")
    terms = {
        tuple(sorted(oa + ob)): va * vb
        for oa, va in a.terms.items()
        for ob, vb in b.terms.items()
    }
    return FockState(terms, a.modes | b.modes)


def normalize(s: FockState) -> FockState:
    n2 = s.norm2
    if n2 == 0:
        raise FockError("cannot normalize zero state")
    return s * (1 / math.sqrt(n2))


def relabel(s: FockState, mapping: Mapping[str, str]) -> FockState:
    """Rename beams. A target beam must not carry photons unless it is renamed too."""
    occupied = {m.beam for occ in s.terms for m, _ in occ}
    for dst in mapping.values():
        if dst in occupied and dst not in mapping:
            raise FockError(f"relabel target beam {dst!r} is occupied")

    def rename(m: ModeId) -> ModeId:
        return ModeId(mapping.get(m.beam, m.beam), m.pol)

    terms = {occupation([(rename(m), n) for m, n in occ]): v for occ, v in s.terms.items()}
    return FockState(terms, frozenset(map(rename, s.modes)))


@dataclass(frozen=True)
class Ensemble:
    """Weighted list of pure states (a classical mixture)."""

    members: tuple

    def __post_init__(self):
        members = tuple((float(w), s) for w, s in self.members)
        if any(w < 0 for w, _ in members):
            raise FockError("ensemble weights must be non-negative")
        object.__setattr__(self, "members", members)

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    @property
    def total_weight(self) -> float:
        return sum(w for w, _ in self.members)

    @property
    def modes(self) -> frozenset:
        return frozenset().union(*(s.modes for _, s in self.members))

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return abs(self.total_weight - 1) < tol and all(
            abs(s.norm2 - 1) < tol for _, s in self.members
        )

    @classmethod
    def pure(cls, state: FockState) -> "Ensemble":
        return cls(((1.0, state),))

    def map(self, fn) -> "Ensemble":
        return Ensemble(tuple((w, fn(s)) for w, s in self.members))


StateLike = Union[FockState, Ensemble]


def as_ensemble(x: StateLike) -> Ensemble:
    return x if isinstance(x, Ensemble) else Ensemble.pure(x)


def mix(parts: Sequence[tuple[float, FockState]]) -> Ensemble:
    """Normalized ensemble from unnormalized weights and states."""
    total = sum(w for w, _ in parts)
    return Ensemble(tuple((w / total, normalize(s)) for w, s in parts if w > 0))


# -- density-operator views, used for mixtures and partial traces --------------


def basis_of(states: Iterable[FockState], modes: Iterable[ModeId] | None = None) -> list[Occupation]:
    occs: set = set()
    keep = None if modes is None else frozenset(modes)
    for s in states:
        for occ in s.terms:
            occs.add(occ if keep is None else tuple(p for p in occ if p[0] in keep))
    return sorted(occs, key=_occ_key)


def density_matrix(x: StateLike, basis: Sequence[Occupation] | None = None):
    """Dense density operator of a state or ensemble on the occupations it touches.

    Returns ``(basis, rho)``.
    """
    ens = as_ensemble(x)
    if basis is None:
        basis = basis_of(s for _, s in ens)
    index = {occ: i for i, occ in enumerate(basis)}
    rho = np.zeros((len(basis), len(basis)), dtype=complex)
    for w, s in ens:
        v = np.zeros(len(basis), dtype=complex)
        for occ, amp in s.terms.items():
            v[index[occ]] = amp
        rho += w * np.outer(v, v.conj())
    return list(basis), rho


def reduced_density(x: StateLike, keep: Iterable[ModeId]):
    """Partial trace onto the modes in ``keep``. Returns ``(basis, rho)``."""
    keep = frozenset(keep)
    ens = as_ensemble(x)
    basis = basis_of((s for _, s in ens), keep)
    index = {occ: i for i, occ in enumerate(basis)}
    rho = np.zeros((len(basis), len(basis)), dtype=complex)
    for w, s in ens:
        groups: dict[Occupation, dict[int, complex]] = {}
        for occ, amp in s.terms.items():
            kept = tuple(p for p in occ if p[0] in keep)
            rest = tuple(p for p in occ if p[0] not in keep)
            groups.setdefault(rest, {})[index[kept]] = amp
        for g in groups.values():
            v = np.zeros(len(basis), dtype=complex)
            for i, amp in g.items():
                v[i] = amp
            rho += w * np.outer(v, v.conj())
    return basis, rho


def trace_distance(a: StateLike, b: StateLike) -> float:
    ea, eb = as_ensemble(a), as_ensemble(b)
    basis = basis_of([s for _, s in ea] + [s for _, s in eb])
    _, ra = density_matrix(ea, basis)
    _, rb = density_matrix(eb, basis)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(ra - rb)).sum())
