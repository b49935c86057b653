import math

import numpy as np
import pytest

from photonlace.elements import generic, hwp, pbs, phase_shifter
from photonlace.fock import ModeId, make_state, modes_of, normalize

R_GRID = (0.2, 0.5, 1.0, 2.0, 5.0)
PHI_GRID = (0.0, math.pi / 4, math.pi / 2, 0.9 * math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(20031)


def random_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(rng, beams, max_photons=4, max_terms=5):
    """Random normalized superposition over up to ``max_terms`` occupations."""
    modes = [m for b in beams for m in modes_of(b)]
    terms = []
    for _ in range(rng.integers(1, max_terms + 1)):
        n = int(rng.integers(0, max_photons + 1))
        counts = {}
        for k in rng.integers(0, len(modes), size=n):
            counts[modes[k]] = counts.get(modes[k], 0) + 1
        terms.append((counts, complex(rng.normal(), rng.normal())))
    try:
        s = make_state(terms, modes)
    except ValueError:
        s = make_state([({modes[0]: 1}, 1.0)], modes)
    return normalize(s)


def random_element(rng, beams):
    kind = rng.integers(0, 4)
    b = [str(x) for x in rng.permutation(beams)]
    if kind == 0 and len(b) >= 4:
        return pbs(b[0], b[1], b[2], b[3])
    if kind == 1:
        return hwp(b[0], float(rng.uniform(-math.pi, math.pi)))
    if kind == 2:
        return phase_shifter(b[0], float(rng.uniform(-math.pi, math.pi)))
    k = int(rng.integers(1, min(len(b), 4) + 1))
    modes = [m for x in b[:k] for m in modes_of(x)]
    return generic(modes, random_unitary(rng, len(modes)))


# Acceptance verdicts, filled in by test_acceptance.py and echoed at the end of the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
