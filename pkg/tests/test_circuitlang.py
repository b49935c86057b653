import math
import time

import numpy as np
import pytest

from dsl_gen import mutate, random_spec
from photonlace.circuitlang import (
    CircuitSpec,
    HwpStmt,
    ParseError,
    PbsStmt,
    format_angle,
    load,
    parse,
    parse_expr,
    serialize,
    to_circuit,
    corpus_text,
)
from photonlace.schemes import fig1_circuit, fig1_detectors, fig2_circuit, fig2_detectors


def err(text):
    with pytest.raises(ParseError) as info:
        parse(text)
    return info.value


# -- corpus ---------------------------------------------------------------------------


def test_fig1_corpus_statement_counts():
    spec = parse(corpus_text("fig1"))
    hwps = [e for e in spec.elements if isinstance(e, HwpStmt)]
    assert sorted(h.angle for h in hwps) == [math.pi / 4] * 2 + [math.pi / 2] * 2
    assert sum(isinstance(e, PbsStmt) for e in spec.elements) == 4
    assert len(spec.detectors) == 4


@pytest.mark.parametrize("name", ["fig1", "fig2"])
def test_corpus_lowers_to_builtin(name):
    low = to_circuit(parse(corpus_text(name)))
    builtin = fig1_circuit() if name == "fig1" else fig2_circuit()
    assert low.circuit.registry == builtin.registry
    assert len(low.circuit.steps) == len(builtin.steps)
    for a, b in zip(low.circuit.steps, builtin.steps):
        assert a == b
    dets = fig1_detectors("four") if name == "fig1" else fig2_detectors()
    assert list(low.detectors) == dets


def test_fig2_corpus_with_plates_matches_builtin():
    low = to_circuit(parse(corpus_text("fig2")), hwp_inserted=True)
    assert low.circuit.steps == fig2_circuit(hwp_inserted=True).steps
    assert low.hwp_inserted


def test_load_reads_files(tmp_path):
    p = tmp_path / "c.pcl"
    p.write_text(corpus_text("fig1"))
    assert load(p) == parse(corpus_text("fig1"))


# -- lowering examples ------------------------------------------------------------------


def test_half_pi_plate_is_swap():
    low = to_circuit(parse("beam 3\nhwp beam=3 angle=pi/2\n"))
    assert np.array_equal(low.circuit.steps[0].matrix, np.array([[0, 1], [1, 0]], dtype=complex))


def test_phase_quarter_turn():
    low = to_circuit(parse("beam 1\nphase beam=1 theta=pi/2\n"))
    assert np.allclose(low.circuit.steps[0].matrix, np.diag([1j, 1j]), atol=1e-15)


def test_source_state_uses_params():
    low = to_circuit(parse("beam 1\nbeam 2\nsource u1 r=2\n"))
    assert low.params.r == 2.0
    assert low.source_state().norm2 == pytest.approx(1)


# -- diagnostics ----------------------------------------------------------------------


def test_undeclared_beam_message():
    e = err("beam 1\npbs in=(1,3) out=(1p,3p)\n")
    assert str(e) == "undeclared beam '3' at line 2, column 11"
    assert (e.line, e.column) == (2, 11)


@pytest.mark.parametrize(
    "text,fragment,line",
    [
        ("beem 1", "unknown keyword 'beem'", 1),
        ("beam 1\nbeam 1", "duplicate declaration of beam '1'", 2),
        ("beam 1\nhwp beam=1 angle=banana", "non-numeric parameter", 2),
        ("beam 1\nhwp beam=1 angle=pi/0", "division by zero", 2),
        ("beam 1\nhwp beam=1", "hwp requires 'angle='", 2),
        ("beam 1\nhwp beam=1 angle=1 tilt=2", "unknown argument 'tilt'", 2),
        ("beam 1\nbeam 2\nrelabel 1 -> 2\nhwp beam=1 angle=1", "beam '1' used after being consumed", 4),
        ("beam a\nbeam b\nbeam c\nbeam d\npbs in=(a,b) out=(c,d)\npbs in=(c,d) out=(a,b)", "already in use", 6),
        ("beam 1\npbs in=(1,1) out=(1,1)", "four distinct", 2),
        ("beam 1\ndetector D beam=1\ndetector E beam=1 pol=H", "overlap", 3),
        ("beam 1\nbeam 2\nrelabel 1 -> 2\ndetector D beam=1", "consumed beam", 4),
        ("beam 1\nsource u1", "source needs undeclared beam '2'", 2),
        ("beam 1\nbeam 2\nsource u1 r=0", "r must be > 0", 3),
        ("beam 1\ndetector D beam=1 eta=2", "eta must be in (0, 1]", 2),
        ("option color=red", "unknown option", 1),
        ("beam 1\nhwp beam=(1,2) angle=1", "takes one value", 2),
        ("beam 1\npbs in=(1 out=(1,2)", "", 2),
        ("beam $", "unexpected character", 1),
        ("source laser", "unknown source kind", 1),
    ],
)
def test_error_kinds(text, fragment, line):
    e = err(text)
    assert fragment in e.message
    assert e.line == line
    assert e.column >= 1
    assert str(e).endswith(f"at line {e.line}, column {e.column}")


def test_comments_and_blank_lines_ignored():
    spec = parse("# header\n\nbeam 1   # trailing\n\n")
    assert spec.beams == ("1",)


# -- numbers --------------------------------------------------------------------------


@pytest.mark.parametrize("text,value", [("pi", math.pi), ("-pi/2", -math.pi / 2), ("3*pi/4", 3 * math.pi / 4), ("0.25", 0.25), ("1e-3", 1e-3)])
def test_parse_expr(text, value):
    assert parse_expr(text) == value


@pytest.mark.parametrize("x", [math.pi / 4, -math.pi / 2, 3 * math.pi / 4, 0.1, 0.0, 1e-300, 7.25])
def test_format_angle_round_trips(x):
    assert parse_expr(format_angle(x)) == x


def test_format_angle_prefers_pi():
    assert format_angle(math.pi / 2) == "pi/2"
    assert format_angle(-3 * math.pi / 4) == "-3*pi/4"


# -- round trip ----------------------------------------------------------------------------


def test_empty_spec_serializes_to_header():
    assert serialize(CircuitSpec()) == "# photonlace circuit v1\n"
    assert parse(serialize(CircuitSpec())) == CircuitSpec()


def test_serialize_is_deterministic():
    spec = parse(corpus_text("fig1"))
    assert serialize(spec) == serialize(parse(corpus_text("fig1")))


def test_random_round_trip_1000():
    rng = np.random.default_rng(909)
    for _ in range(1000):
        spec = random_spec(rng)
        text = serialize(spec)
        back = parse(text)
        assert back == spec, text
        assert serialize(back) == text


@pytest.mark.parametrize("name", ["fig1", "fig2"])
def test_serialize_fixed_point(name):
    once = serialize(parse(corpus_text(name)))
    assert serialize(parse(once)) == once


# -- robustness ----------------------------------------------------------------------------


def test_mutation_fuzz():
    rng = np.random.default_rng(4242)
    seeds = [corpus_text("fig1"), corpus_text("fig2")]
    failures = 0
    for k in range(10_000):
        text = mutate(rng, seeds[k % 2])
        try:
            parse(text)
        except ParseError as e:
            failures += 1
            assert e.line >= 1 and e.column >= 1
            assert e.message
    assert failures > 1000


def test_large_input_terminates():
    start = time.perf_counter()
    assert parse("beam " + "a" * 65536).beams == ("a" * 65536,)
    for text in ("(" * 65536, "hwp beam=" + "(x," * 20000, "x" * 65536 + "\n" * 10, "beam 1\n" * 9000):
        with pytest.raises(ParseError):
            parse(text)
    assert time.perf_counter() - start < 5
