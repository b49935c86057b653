"""Linear-optical elements as unitary maps on creation operators.

An element with matrix ``U`` over modes ``m_0..m_{d-1}`` substitutes
``a†_{m_j} -> sum_k U[k, j] a†_{m_k}``, i.e. column ``j`` is the image of
mode ``j``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

from .fock import FockError, FockState, ModeId, modes_of, occupation, relabel

UNITARY_TOL = 1e-12
KINDS = ("PBS", "HWP", "PHASE", "GENERIC")
PBS_CONVENTIONS = ("permutation", "physical")


class ElementError(FockError):
    pass


@dataclass(frozen=True, eq=False)
class ElementSpec:
    name: str
    modes: tuple
    matrix: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        if self.name not in KINDS:
            raise ElementError(f"unknown element kind {self.name!r}")
        modes = tuple(self.modes)
        if len(set(modes)) != len(modes):
            raise ElementError("element touches a mode twice")
        u = np.array(self.matrix, dtype=complex)
        if u.shape != (len(modes), len(modes)):
            raise ElementError(f"matrix shape {u.shape} does not match {len(modes)} modes")
        err = np.abs(u.conj().T @ u - np.eye(len(modes))).max() if len(modes) else 0.0
        if err > UNITARY_TOL:
            raise ElementError(f"matrix is not unitary (max |U^dag U - I| = {err:.3g})")
        u.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "matrix", u)

    def __eq__(self, other):
        if not isinstance(other, ElementSpec):
            return NotImplemented
        return (
            self.name == other.name
            and self.modes == other.modes
            and np.array_equal(self.matrix, other.matrix)
        )

    def __hash__(self):
        return hash((self.name, self.modes, self.matrix.tobytes()))

    @property
    def beams(self) -> tuple:
        return tuple(dict.fromkeys(m.beam for m in self.modes))

    def rows(self) -> list[list[tuple[float, float]]]:
        """Row-major matrix as (re, im) pairs, for debugging output."""
        return [[(z.real, z.imag) for z in row] for row in self.matrix.tolist()]


@dataclass(frozen=True)
class Relabel:
    """Beam rename metadata (e.g. 1' -> 1''); not a physical element."""

    src: str
    dst: str


Step = Union[ElementSpec, Relabel]


def pbs(in_a: str, in_b: str, out_a: str, out_b: str, convention: str = "permutation") -> ElementSpec:
    """Polarizing beam splitter: H is transmitted, V is reflected.

    ``in_a`` H -> ``out_a``, ``in_a`` V -> ``out_b``, ``in_b`` H -> ``out_b``,
    ``in_b`` V -> ``out_a``. With ``convention="permutation"`` all coefficients are +1;
    ``"physical"`` puts a factor i on the reflected paths.
    """
    beams = (in_a, in_b, out_a, out_b)
    if len(set(beams)) != 4:
        raise ElementError(f"pbs needs four distinct beams, got {beams}")
    if convention not in PBS_CONVENTIONS:
        raise ElementError(f"unknown pbs convention {convention!r}")
    refl = 1j if convention == "physical" else 1.0
    modes = [m for b in beams for m in modes_of(b)]
    idx = {m: i for i, m in enumerate(modes)}
    H, V = "H", "V"
    u = np.zeros((8, 8), dtype=complex)
    routes = [
        ((in_a, H), (out_a, H), 1.0),
        ((in_a, V), (out_b, V), refl),
        ((in_b, H), (out_b, H), 1.0),
        ((in_b, V), (out_a, V), refl),
    ]
    for (sb, sp), (db, dp), c in routes:
        u[idx[ModeId(db, dp)], idx[ModeId(sb, sp)]] = c
        # output ports are vacuum on entry; send them back so U stays a permutation
        u[idx[ModeId(sb, sp)], idx[ModeId(db, dp)]] = 1.0
    return ElementSpec("PBS", tuple(modes), u, label=f"pbs({in_a},{in_b}->{out_a},{out_b})")


def hwp_matrix(angle: float) -> np.ndarray:
    c, s = _cos_sin(angle)
    return np.array([[c, s], [s, -c]], dtype=complex)


def _cos_sin(angle: float) -> tuple[float, float]:
    # exact values on the eighth-turn grid keep pi/2 an exact swap
    q = angle / (math.pi / 4)
    if q == round(q):
        r = math.sqrt(0.5)
        grid = [(1.0, 0.0), (r, r), (0.0, 1.0), (-r, r), (-1.0, 0.0), (-r, -r), (0.0, -1.0), (r, -r)]
        return grid[int(round(q)) % 8]
    return math.cos(angle), math.sin(angle)


def hwp(beam: str, angle: float) -> ElementSpec:
    """Half-wave plate rotating polarization by ``angle``.

    ``angle = pi/2`` swaps H and V; ``angle = pi/4`` maps H -> (H+V)/sqrt2 and
    V -> (H-V)/sqrt2.
    """
    return ElementSpec("HWP", modes_of(beam), hwp_matrix(angle), label=f"hwp({beam},{angle:.6g})")


def phase_shifter(beam: str, theta: float) -> ElementSpec:
    z = 1.0 if theta == 0 else cmath.exp(1j * theta)
    return ElementSpec("PHASE", modes_of(beam), np.diag([z, z]), label=f"phase({beam},{theta:.6g})")


def phase_flip(beam: str) -> ElementSpec:
    """Local sigma_z on the polarization of ``beam`` (V -> -V)."""
    return generic(modes_of(beam), np.diag([1.0, -1.0]), label=f"flip({beam})")


def generic(modes: Sequence[ModeId], matrix, label: str = "") -> ElementSpec:
    return ElementSpec("GENERIC", tuple(modes), np.asarray(matrix, dtype=complex), label=label)


@lru_cache(maxsize=4096)
def _expand(u_bytes: bytes, d: int, counts_in: tuple) -> tuple:
    """Image of ``prod_j (a†_j)^{n_j} |0> / sqrt(prod n_j!)`` as normalized-ket amplitudes."""
    u = np.frombuffer(u_bytes, dtype=complex).reshape(d, d)
    poly: dict[tuple, complex] = {(0,) * d: 1.0 + 0j}
    for j, n in enumerate(counts_in):
        col = [(k, u[k, j]) for k in range(d) if u[k, j] != 0]
        for _ in range(n):
            nxt: dict[tuple, complex] = {}
            for key, c in poly.items():
                for k, ukj in col:
                    out = key[:k] + (key[k] + 1,) + key[k + 1 :]
                    nxt[out] = nxt.get(out, 0) + c * ukj
            poly = nxt
    pre = 1 / math.sqrt(math.prod(math.factorial(n) for n in counts_in))
    return tuple(
        (key, c * pre * math.sqrt(math.prod(math.factorial(m) for m in key)))
        for key, c in poly.items()
    )


def apply_element(state: FockState, element: ElementSpec) -> FockState:
    missing = [m for m in element.modes if m not in state.modes]
    if missing:
        raise ElementError(f"unknown mode {missing[0]} for {element.label or element.name}")
    index = {m: i for i, m in enumerate(element.modes)}
    d = len(element.modes)
    u_bytes = element.matrix.tobytes()
    out: dict[tuple, complex] = {}
    for occ, amp in state.terms.items():
        counts = [0] * d
        rest = []
        for m, n in occ:
            if m in index:
                counts[index[m]] = n
            else:
                rest.append((m, n))
        n_in = sum(counts)
        for key, c in _expand(u_bytes, d, tuple(counts)):
            touched = [(element.modes[k], n) for k, n in enumerate(key) if n]
            new = occupation(rest + touched)
            assert sum(key) == n_in
            out[new] = out.get(new, 0) + amp * c
    return FockState(out, state.modes)


@dataclass(frozen=True)
class Circuit:
    """Ordered elements and relabelings over a mode registry.

    ``registry`` lists the modes present at the input, including vacuum
    ports and beams that only appear as element outputs. Relabel steps
    introduce their target beam and retire their source.
    """

    registry: frozenset
    steps: tuple = ()

    def __post_init__(self):
        registry = frozenset(self.registry)
        registry = frozenset(m for b in {m.beam for m in registry} for m in modes_of(b))
        object.__setattr__(self, "registry", registry)
        object.__setattr__(self, "steps", tuple(self.steps))
        live = {m.beam for m in registry}
        retired: set = set()
        for pos, step in enumerate(self.steps):
            if isinstance(step, Relabel):
                if step.src not in live:
                    raise ElementError(f"step {pos}: relabel source {step.src!r} is not live")
                if step.dst in live or step.dst in retired:
                    raise ElementError(f"step {pos}: relabel target {step.dst!r} already in use")
                live.discard(step.src)
                retired.add(step.src)
                live.add(step.dst)
            else:
                for b in step.beams:
                    if b not in live:
                        raise ElementError(f"step {pos}: beam {b!r} not in registry here")

    @property
    def elements(self) -> tuple:
        return tuple(s for s in self.steps if isinstance(s, ElementSpec))

    @property
    def relabelings(self) -> tuple:
        return tuple(s for s in self.steps if isinstance(s, Relabel))

    @property
    def output_beams(self) -> frozenset:
        live = {m.beam for m in self.registry}
        for s in self.relabelings:
            live.discard(s.src)
            live.add(s.dst)
        return frozenset(live)

    def then(self, *steps: Step, extra_modes: Iterable[ModeId] = ()) -> "Circuit":
        return Circuit(self.registry | frozenset(extra_modes), self.steps + tuple(steps))


def build_circuit(steps: Sequence[Step], extra_beams: Iterable[str] = ()) -> Circuit:
    """Circuit whose registry is inferred from the elements' beams."""
    beams = set(extra_beams)
    produced = set()
    for s in steps:
        if isinstance(s, Relabel):
            produced.add(s.dst)
        else:
            beams.update(b for b in s.beams if b not in produced)
    return Circuit(frozenset(m for b in beams for m in modes_of(b)), tuple(steps))


def apply_circuit(state: FockState, circuit: Circuit) -> FockState:
    stray = state.modes - circuit.registry
    if stray:
        raise ElementError(f"state mode {sorted(stray)[0]} not in circuit registry")
    state = state.with_modes(circuit.registry)
    for step in circuit.steps:
        if isinstance(step, Relabel):
            state = relabel(state, {step.src: step.dst})
        else:
            state = apply_element(state, step)
    return state
