"""Random generators of valid and mutated circuit descriptions."""

import math

from photonlace.circuitlang import (
    CircuitSpec,
    DetectorStmt,
    HwpStmt,
    PbsStmt,
    PhaseStmt,
    RelabelStmt,
    SourceStmt,
)
from photonlace.schemes import SOURCE_KINDS

ANGLES = (math.pi, math.pi / 2, -math.pi / 2, math.pi / 4, 3 * math.pi / 4, 0.0, -math.pi)


def _angle(rng):
    if rng.random() < 0.5:
        return ANGLES[int(rng.integers(len(ANGLES)))]
    return float(rng.uniform(-10, 10))


def _eta(rng):
    return float(rng.choice([1.0, 0.5, rng.uniform(1e-3, 1.0)]))


def random_spec(rng) -> CircuitSpec:
    """A CircuitSpec that satisfies every parser rule."""
    n = int(rng.integers(0, 14))
    beams = [str(b) for b in ("1", "2", "3", "4")[: n]] + [f"b{k}'" if k % 3 == 0 else f"b{k}" for k in range(max(0, n - 4))]
    state = dict.fromkeys(beams, "fresh")
    elements = []
    for _ in range(int(rng.integers(0, 12))):
        usable = [b for b in beams if state[b] != "consumed"]
        fresh = [b for b in beams if state[b] == "fresh"]
        kind = int(rng.integers(4))
        if kind == 0 and len(usable) >= 2:
            a, b = (str(x) for x in rng.choice(usable, 2, replace=False))
            outs = [x for x in fresh if x not in (a, b)]
            if len(outs) < 2:
                continue
            c, d = (str(x) for x in rng.choice(outs, 2, replace=False))
            elements.append(PbsStmt(a, b, c, d))
            state.update({a: "consumed", b: "consumed", c: "live", d: "live"})
        elif kind in (1, 2) and usable:
            b = str(rng.choice(usable))
            elements.append((HwpStmt if kind == 1 else PhaseStmt)(b, _angle(rng)))
            state[b] = "live"
        elif kind == 3 and usable:
            src = str(rng.choice(usable))
            outs = [x for x in fresh if x != src]
            if not outs:
                continue
            dst = str(rng.choice(outs))
            elements.append(RelabelStmt(src, dst))
            state.update({src: "consumed", dst: "live"})
    detectors = []
    taken = set()
    for k in range(int(rng.integers(0, 5))):
        alive = [b for b in beams if state[b] != "consumed"]
        if not alive:
            break
        b = str(rng.choice(alive))
        pol = str(rng.choice(["any", "H", "V"]))
        pols = {"H", "V"} if pol == "any" else {pol}
        if any((b, p) in taken for p in pols):
            continue
        taken |= {(b, p) for p in pols}
        detectors.append(DetectorStmt(
            f"D{k}", b, pol, str(rng.choice(["threshold", "pnr"])), _eta(rng) if rng.random() < 0.5 else None
        ))
    source = None
    if n >= 4 and rng.random() < 0.7:
        source = SourceStmt(
            str(rng.choice(SOURCE_KINDS)),
            float(rng.uniform(0.01, 10)) if rng.random() < 0.6 else None,
            _angle(rng) if rng.random() < 0.6 else None,
        )
    options = {}
    if rng.random() < 0.4:
        options["eta"] = _eta(rng)
    if rng.random() < 0.4:
        options["hwp_inserted"] = bool(rng.random() < 0.5)
    if rng.random() < 0.4:
        options["phases"] = tuple(_angle(rng) for _ in range(int(rng.integers(1, 5))))
    return CircuitSpec(tuple(beams), tuple(elements), tuple(detectors), source, options)


JUNK = list("()=,->#*/ .'_\t") + ["pi", "beam", "pbs", "1", "x", "\n", "e9", "nan", "inf", "0", "-", "hwp"]


def mutate(rng, text: str) -> str:
    """Apply a few random character or line edits."""
    for _ in range(int(rng.integers(1, 4))):
        op = int(rng.integers(6))
        if op < 3 and text:
            i = int(rng.integers(len(text)))
            if op == 0:
                text = text[:i] + text[i + 1:]
            elif op == 1:
                text = text[:i] + str(rng.choice(JUNK)) + text[i:]
            else:
                text = text[:i] + chr(int(rng.integers(32, 127))) + text[i + 1:]
        else:
            lines = text.split("\n")
            i, j = (int(x) for x in rng.integers(0, len(lines), 2))
            if op == 3:
                lines.insert(j, lines[i])
            elif op == 4:
                del lines[i]
            else:
                lines[i], lines[j] = lines[j], lines[i]
            text = "\n".join(lines)
    return text
