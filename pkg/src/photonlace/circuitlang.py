"""Line-oriented circuit description language (``.pcl`` files).

Grammar, one statement per line, ``#`` starts a comment::

    beam <label>
    source <kind> [r=<num>] [phi=<expr>]
    pbs in=(<b>,<b>) out=(<b>,<b>)
    hwp beam=<b> angle=<expr>
    phase beam=<b> theta=<expr>
    relabel <b> -> <b>
    detector <id> beam=<b> [pol=H|V|any] [resolution=threshold|pnr] [eta=<num>]
    option <key>=<value>

``<expr>`` is a decimal literal or a multiple of pi: ``pi``, ``-pi/2``,
``3*pi/4``. Options: ``hwp_inserted=true|false`` puts a pi/4 plate in front
of every polarization-resolving detector, ``eta=<num>`` is the default
detector efficiency, ``phases=<expr>,<expr>,...`` the dephasing phases of an
``spdc_mixture`` source.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from .detect import DetectorSpec, detector
from .elements import Circuit, Relabel, hwp, pbs, phase_shifter
from .fock import FockError, modes_of
from .schemes import QUARTER_PHASES, SOURCE_KINDS, RawStateParams, make_source

KEYWORDS = ("beam", "source", "pbs", "hwp", "phase", "relabel", "detector", "option")
OPTION_KEYS = ("eta", "hwp_inserted", "phases")
LABEL_RE = re.compile(r"[A-Za-z0-9_']+\Z")
ID_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
NUM_RE = re.compile(rf"[+-]?{_NUM}\Z")
PI_RE = re.compile(rf"(?P<sign>[+-]?)(?:(?P<coef>{_NUM})\*)?pi(?:/(?P<den>\d+))?\Z")
TOKEN_RE = re.compile(r"\s*(?:(?P<arrow>->)|(?P<punct>[()=,])|(?P<atom>(?:[A-Za-z0-9_'.*/+]|-(?!>))+))")
HEADER = "# photonlace circuit v1"


class ParseError(FockError):
    """Diagnostic with a 1-based source location."""

    def __init__(self, message: str, line: int, column: int):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"{message} at line {line}, column {column}")


# -- statements ----------------------------------------------------------------


@dataclass(frozen=True)
class PbsStmt:
    in_a: str
    in_b: str
    out_a: str
    out_b: str


@dataclass(frozen=True)
class HwpStmt:
    beam: str
    angle: float


@dataclass(frozen=True)
class PhaseStmt:
    beam: str
    theta: float


@dataclass(frozen=True)
class RelabelStmt:
    src: str
    dst: str


@dataclass(frozen=True)
class DetectorStmt:
    id: str
    beam: str
    pol: str = "any"
    resolution: str = "threshold"
    eta: float | None = None


@dataclass(frozen=True)
class SourceStmt:
    kind: str
    r: float | None = None
    phi: float | None = None


ElementStmt = Union[PbsStmt, HwpStmt, PhaseStmt, RelabelStmt]


@dataclass(frozen=True)
class CircuitSpec:
    beams: tuple = ()
    elements: tuple = ()
    detectors: tuple = ()
    source: SourceStmt | None = None
    options: dict = field(default_factory=dict)


# -- numbers -------------------------------------------------------------------


def _pi_value(sign: str, coef: float, den: int) -> float:
    v = coef * math.pi / den
    return -v if sign == "-" else v


def parse_expr(text: str) -> float:
    """Evaluate a numeric literal or pi multiple; raises ValueError."""
    if NUM_RE.match(text):
        v = float(text)
    else:
        m = PI_RE.match(text)
        if not m:
            raise ValueError(f"non-numeric parameter {text!r}")
        den = int(m["den"] or 1)
        if den == 0:
            raise ValueError("division by zero")
        v = _pi_value(m["sign"], float(m["coef"] or 1), den)
    if not math.isfinite(v):
        raise ValueError(f"non-finite parameter {text!r}")
    return v


def format_number(x: float) -> str:
    return repr(float(x))


def format_angle(x: float) -> str:
    """Shortest ``a*pi/b`` spelling that parses back to exactly ``x``, else a literal."""
    if x != 0 and math.isfinite(x):
        guess = Fraction(abs(x) / math.pi).limit_denominator(64)
        if 0 < guess.numerator <= 256:
            sign = "-" if x < 0 else ""
            a, b = guess.numerator, guess.denominator
            if _pi_value(sign, float(a), b) == x:
                coef = "" if a == 1 else f"{a}*"
                den = "" if b == 1 else f"/{b}"
                return f"{sign}{coef}pi{den}"
    return format_number(x)


# -- lexing --------------------------------------------------------------------


@dataclass
class Tok:
    kind: str
    text: str
    col: int


def _lex(line: str, lineno: int) -> list[Tok]:
    toks = []
    pos = 0
    n = len(line)
    while pos < n:
        if line[pos].isspace():
            pos += 1
            continue
        m = TOKEN_RE.match(line, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        kind = m.lastgroup
        toks.append(Tok(kind, m[kind], m.start(kind) + 1))
        pos = m.end()
    return toks


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


@dataclass
class _Args:
    positional: list
    kv: dict  # key -> (key_tok, [value toks] or tuple marker)


def _split_args(toks: list[Tok], lineno: int, end_col: int) -> _Args:
    positional: list[Tok] = []
    kv: dict = {}
    i = 0
    while i < len(toks):
        t = toks[i]
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        if t.kind == "atom" and nxt is not None and nxt.text == "=":
            if t.text in kv:
                raise ParseError(f"duplicate argument '{t.text}'", lineno, t.col)
            i += 2
            if i >= len(toks):
                raise ParseError(f"missing value for '{t.text}'", lineno, end_col)
            if toks[i].text == "(":
                vals, i = _tuple(toks, i, lineno, end_col)
                kv[t.text] = (t, vals, True)
            else:
                vals, i = _list(toks, i, lineno, end_col)
                kv[t.text] = (t, vals, False)
        elif t.kind in ("atom", "arrow"):
            if kv:
                raise ParseError(f"positional argument '{t.text}' after keyword arguments", lineno, t.col)
            positional.append(t)
            i += 1
        else:
            raise ParseError(f"unexpected '{t.text}'", lineno, t.col)
    return _Args(positional, kv)


def _tuple(toks, i, lineno, end_col):
    start = toks[i]
    i += 1
    vals = []
    while True:
        if i >= len(toks):
            raise ParseError("unclosed '('", lineno, start.col)
        t = toks[i]
        if t.kind != "atom":
            raise ParseError(f"expected a value, got '{t.text}'", lineno, t.col)
        vals.append(t)
        i += 1
        if i >= len(toks):
            raise ParseError("unclosed '('", lineno, start.col)
        if toks[i].text == ")":
            return vals, i + 1
        if toks[i].text != ",":
            raise ParseError(f"expected ',' or ')', got '{toks[i].text}'", lineno, toks[i].col)
        i += 1


def _list(toks, i, lineno, end_col):
    vals = []
    while True:
        if i >= len(toks) or toks[i].kind != "atom":
            col = toks[i].col if i < len(toks) else end_col
            got = toks[i].text if i < len(toks) else "end of line"
            raise ParseError(f"expected a value, got '{got}'", lineno, col)
        vals.append(toks[i])
        i += 1
        if i < len(toks) and toks[i].text == ",":
            i += 1
            continue
        return vals, i


# -- parsing -------------------------------------------------------------------


class _Parser:
    def __init__(self):
        self.beams: list[str] = []
        self.state: dict[str, str] = {}  # beam -> fresh | live | consumed
        self.elements: list = []
        self.detectors: list[tuple[DetectorStmt, int, int]] = []
        self.source: SourceStmt | None = None
        self.source_loc = (0, 0)
        self.options: dict = {}
        self.line = 0
        self.end_col = 1

    def err(self, msg: str, tok: Tok | None = None):
        raise ParseError(msg, self.line, tok.col if tok else 1)

    # helpers
    def _label(self, tok: Tok) -> str:
        if not LABEL_RE.match(tok.text):
            self.err(f"bad beam label '{tok.text}'", tok)
        return tok.text

    def _declared(self, tok: Tok) -> str:
        b = self._label(tok)
        if b not in self.state:
            self.err(f"undeclared beam '{b}'", tok)
        return b

    def _usable(self, tok: Tok) -> str:
        b = self._declared(tok)
        if self.state[b] == "consumed":
            self.err(f"beam '{b}' used after being consumed", tok)
        return b

    def _fresh(self, tok: Tok) -> str:
        b = self._declared(tok)
        if self.state[b] != "fresh":
            self.err(f"output beam '{b}' is already in use", tok)
        return b

    def _num(self, key_tok: Tok, vals: list[Tok], is_tuple: bool = False) -> float:
        if is_tuple or len(vals) != 1:
            self.err(f"'{key_tok.text}' takes one value", key_tok)
        try:
            return parse_expr(vals[0].text)
        except ValueError as e:
            self.err(str(e), vals[0])

    def _one(self, key_tok: Tok, vals: list[Tok], is_tuple: bool) -> Tok:
        if is_tuple or len(vals) != 1:
            self.err(f"'{key_tok.text}' takes one value", key_tok)
        return vals[0]

    def _pair(self, key_tok: Tok, vals: list[Tok], is_tuple: bool) -> list[Tok]:
        if not is_tuple or len(vals) != 2:
            self.err(f"'{key_tok.text}' takes a pair (<b>,<b>)", key_tok)
        return vals

    def _kwargs(self, kw: Tok, args: _Args, required: tuple, optional: tuple = ()) -> dict:
        for k, (tok, _, _) in args.kv.items():
            if k not in required + optional:
                self.err(f"unknown argument '{k}' for {kw.text}", tok)
        for k in required:
            if k not in args.kv:
                self.err(f"{kw.text} requires '{k}='", kw)
        return args.kv

    def _arity(self, kw: Tok, args: _Args, n: int):
        if len(args.positional) != n:
            where = args.positional[n] if len(args.positional) > n else kw
            self.err(f"{kw.text} expects {n} positional argument{'s' if n != 1 else ''}, got {len(args.positional)}", where)

    # statements
    def statement(self, toks: list[Tok]):
        kw = toks[0]
        if kw.kind != "atom" or kw.text not in KEYWORDS:
            self.err(f"unknown keyword '{kw.text}'", kw)
        args = _split_args(toks[1:], self.line, self.end_col)
        getattr(self, f"st_{kw.text}")(kw, args)

    def st_beam(self, kw, args):
        self._arity(kw, args, 1)
        self._kwargs(kw, args, ())
        b = self._label(args.positional[0])
        if b in self.state:
            self.err(f"duplicate declaration of beam '{b}'", args.positional[0])
        self.beams.append(b)
        self.state[b] = "fresh"

    def st_source(self, kw, args):
        self._arity(kw, args, 1)
        kv = self._kwargs(kw, args, (), ("r", "phi"))
        if self.source is not None:
            self.err("duplicate declaration of source", kw)
        kind = args.positional[0]
        if kind.text not in SOURCE_KINDS:
            self.err(f"unknown source kind '{kind.text}'", kind)
        r = self._num(*kv["r"]) if "r" in kv else None
        if r is not None and not r > 0:
            self.err("r must be > 0", kv["r"][1][0])
        phi = self._num(*kv["phi"]) if "phi" in kv else None
        self.source = SourceStmt(kind.text, r, phi)
        self.source_loc = (self.line, kw.col)

    def st_pbs(self, kw, args):
        self._arity(kw, args, 0)
        kv = self._kwargs(kw, args, ("in", "out"))
        ins = self._pair(*kv["in"])
        outs = self._pair(*kv["out"])
        labels = [self._label(t) for t in ins + outs]
        if len(set(labels)) != 4:
            self.err("pbs needs four distinct beams", kw)
        a, b = (self._usable(t) for t in ins)
        c, d = (self._fresh(t) for t in outs)
        self.state.update({a: "consumed", b: "consumed", c: "live", d: "live"})
        self.elements.append(PbsStmt(a, b, c, d))

    def _inplace(self, kw, args, key):
        self._arity(kw, args, 0)
        kv = self._kwargs(kw, args, ("beam", key))
        b = self._usable(self._one(*kv["beam"]))
        v = self._num(*kv[key])
        self.state[b] = "live"
        return b, v

    def st_hwp(self, kw, args):
        self.elements.append(HwpStmt(*self._inplace(kw, args, "angle")))

    def st_phase(self, kw, args):
        self.elements.append(PhaseStmt(*self._inplace(kw, args, "theta")))

    def st_relabel(self, kw, args):
        self._kwargs(kw, args, ())
        p = args.positional
        if len(p) != 3 or p[1].kind != "arrow" or p[0].kind != "atom" or p[2].kind != "atom":
            self.err("relabel expects '<beam> -> <beam>'", p[0] if p else kw)
        if p[0].text == p[2].text:
            self.err("relabel source and target are the same beam", p[2])
        src = self._usable(p[0])
        dst = self._fresh(p[2])
        self.state.update({src: "consumed", dst: "live"})
        self.elements.append(RelabelStmt(src, dst))

    def st_detector(self, kw, args):
        self._arity(kw, args, 1)
        kv = self._kwargs(kw, args, ("beam",), ("pol", "resolution", "eta"))
        ident = args.positional[0]
        if not ID_RE.match(ident.text):
            self.err(f"bad detector id '{ident.text}'", ident)
        if any(d.id == ident.text for d, _, _ in self.detectors):
            self.err(f"duplicate declaration of detector '{ident.text}'", ident)
        beam_tok = self._one(*kv["beam"])
        self._declared(beam_tok)
        pol = "any"
        if "pol" in kv:
            t = self._one(*kv["pol"])
            if t.text not in ("H", "V", "any"):
                self.err(f"pol must be H, V or any, got '{t.text}'", t)
            pol = t.text
        res = "threshold"
        if "resolution" in kv:
            t = self._one(*kv["resolution"])
            if t.text not in ("threshold", "pnr"):
                self.err(f"resolution must be threshold or pnr, got '{t.text}'", t)
            res = t.text
        eta = None
        if "eta" in kv:
            eta = self._num(*kv["eta"])
            if not 0 < eta <= 1:
                self.err("eta must be in (0, 1]", kv["eta"][1][0])
        self.detectors.append((DetectorStmt(ident.text, beam_tok.text, pol, res, eta), self.line, beam_tok.col))

    def st_option(self, kw, args):
        self._arity(kw, args, 0)
        if len(args.kv) != 1:
            self.err("option expects exactly one <key>=<value>", kw)
        (key, (ktok, vals, is_tuple)), = args.kv.items()
        if key not in OPTION_KEYS:
            self.err(f"unknown option '{key}'", ktok)
        if key in self.options:
            self.err(f"duplicate declaration of option '{key}'", ktok)
        if is_tuple:
            self.err(f"option '{key}' does not take a tuple", ktok)
        if key == "hwp_inserted":
            t = self._one(ktok, vals, False)
            if t.text not in ("true", "false"):
                self.err(f"hwp_inserted must be true or false, got '{t.text}'", t)
            self.options[key] = t.text == "true"
        elif key == "eta":
            eta = self._num(ktok, vals)
            if not 0 < eta <= 1:
                self.err("eta must be in (0, 1]", vals[0])
            self.options[key] = eta
        else:
            out = []
            for t in vals:
                try:
                    out.append(parse_expr(t.text))
                except ValueError as e:
                    self.err(str(e), t)
            self.options[key] = tuple(out)

    def finish(self) -> CircuitSpec:
        taken: dict = {}
        for d, line, col in self.detectors:
            self.line = line
            if self.state[d.beam] == "consumed":
                raise ParseError(f"detector '{d.id}' watches consumed beam '{d.beam}'", line, col)
            pols = ("H", "V") if d.pol == "any" else (d.pol,)
            for p in pols:
                if (d.beam, p) in taken:
                    raise ParseError(f"detectors '{taken[(d.beam, p)]}' and '{d.id}' overlap on {d.beam}{p}", line, col)
                taken[(d.beam, p)] = d.id
        if self.source is not None:
            for b in _source_beams(self.source.kind):
                if b not in self.state:
                    raise ParseError(f"source needs undeclared beam '{b}'", *self.source_loc)
        return CircuitSpec(
            tuple(self.beams),
            tuple(self.elements),
            tuple(d for d, _, _ in self.detectors),
            self.source,
            dict(self.options),
        )


def _source_beams(kind: str) -> tuple:
    return {"u1": ("1", "2"), "u2": ("3", "4")}.get(kind, ("1", "2", "3", "4"))


def parse(text: str) -> CircuitSpec:
    """Parse and validate; every failure is a :class:`ParseError`."""
    p = _Parser()
    for lineno, raw in enumerate(text.split("\n"), start=1):
        p.line = lineno
        line = _strip_comment(raw.rstrip("\r"))
        p.end_col = len(line) + 1
        toks = _lex(line, lineno)
        if toks:
            p.statement(toks)
    return p.finish()


# -- serialization ---------------------------------------------------------------


def _stmt_text(s) -> str:
    if isinstance(s, PbsStmt):
        return f"pbs in=({s.in_a},{s.in_b}) out=({s.out_a},{s.out_b})"
    if isinstance(s, HwpStmt):
        return f"hwp beam={s.beam} angle={format_angle(s.angle)}"
    if isinstance(s, PhaseStmt):
        return f"phase beam={s.beam} theta={format_angle(s.theta)}"
    return f"relabel {s.src} -> {s.dst}"


def serialize(spec: CircuitSpec) -> str:
    lines = [HEADER]
    lines += [f"beam {b}" for b in spec.beams]
    if spec.source is not None:
        s = spec.source
        parts = [f"source {s.kind}"]
        if s.r is not None:
            parts.append(f"r={format_number(s.r)}")
        if s.phi is not None:
            parts.append(f"phi={format_angle(s.phi)}")
        lines.append(" ".join(parts))
    lines += [_stmt_text(s) for s in spec.elements]
    for d in spec.detectors:
        parts = [f"detector {d.id} beam={d.beam}"]
        if d.pol != "any":
            parts.append(f"pol={d.pol}")
        if d.resolution != "threshold":
            parts.append(f"resolution={d.resolution}")
        if d.eta is not None:
            parts.append(f"eta={format_number(d.eta)}")
        lines.append(" ".join(parts))
    for key in OPTION_KEYS:
        if key not in spec.options:
            continue
        v = spec.options[key]
        if key == "hwp_inserted":
            text = "true" if v else "false"
        elif key == "eta":
            text = format_number(v)
        else:
            text = ",".join(format_angle(x) for x in v)
        lines.append(f"option {key}={text}")
    return "\n".join(lines) + "\n"


# -- lowering --------------------------------------------------------------------


@dataclass(frozen=True)
class Lowered:
    circuit: Circuit
    detectors: tuple
    source_kind: str | None
    params: RawStateParams
    phases: tuple
    hwp_inserted: bool

    def source_state(self):
        if self.source_kind is None:
            raise ValueError("circuit declares no source")
        return make_source(self.source_kind, self.params, self.phases)


def to_circuit(spec: CircuitSpec, hwp_inserted: bool | None = None) -> Lowered:
    """Lower to element, circuit and detector objects.

    ``hwp_inserted`` overrides the file's option of the same name.
    """
    relabel_targets = {s.dst for s in spec.elements if isinstance(s, RelabelStmt)}
    registry = frozenset(m for b in spec.beams if b not in relabel_targets for m in modes_of(b))
    steps = []
    for s in spec.elements:
        if isinstance(s, PbsStmt):
            steps.append(pbs(s.in_a, s.in_b, s.out_a, s.out_b))
        elif isinstance(s, HwpStmt):
            steps.append(hwp(s.beam, s.angle))
        elif isinstance(s, PhaseStmt):
            steps.append(phase_shifter(s.beam, s.theta))
        else:
            steps.append(Relabel(s.src, s.dst))
    insert = spec.options.get("hwp_inserted", False) if hwp_inserted is None else hwp_inserted
    if insert:
        analysed = dict.fromkeys(d.beam for d in spec.detectors if d.pol != "any")
        steps += [hwp(b, math.pi / 4) for b in analysed]
    default_eta = spec.options.get("eta", 1.0)
    dets = tuple(
        detector(d.id, d.beam, None if d.pol == "any" else d.pol, d.resolution, d.eta if d.eta is not None else default_eta)
        for d in spec.detectors
    )
    src = spec.source
    params = RawStateParams(
        src.r if src and src.r is not None else 1.0,
        src.phi if src and src.phi is not None else 0.0,
    )
    return Lowered(
        Circuit(registry, tuple(steps)),
        dets,
        src.kind if src else None,
        params,
        tuple(spec.options.get("phases", QUARTER_PHASES)),
        bool(insert),
    )


def load(path) -> CircuitSpec:
    with open(path, encoding="utf-8") as f:
        return parse(f.read())


def corpus_text(name: str) -> str:
    """Text of a shipped ``.pcl`` file, e.g. ``corpus_text("fig1")``."""
    from importlib.resources import files

    return files("photonlace").joinpath("data", f"{name}.pcl").read_text(encoding="utf-8")
