import csv
import io
import json
import math
from importlib.resources import files

import jsonschema
import pytest

from photonlace.circuitlang import corpus_text
from photonlace.cli import main


def schema(name):
    return json.loads(files("photonlace").joinpath("schemas", f"{name}.schema.json").read_text())


def run_json(capsys, *argv):
    assert main(list(argv)) == 0
    captured = capsys.readouterr()
    run_json.err = captured.err
    return json.loads(captured.out)


def test_run_builtin_fig1(capsys):
    rep = run_json(capsys, "run", "--builtin", "fig1", "--r", "1", "--phi", "0")
    assert rep["success"] == pytest.approx(0.125, abs=1e-12)
    assert rep["fidelity"] == pytest.approx(1.0, abs=1e-12)
    assert sum(o["probability"] for o in rep["outcomes"]) == pytest.approx(1, abs=1e-9)
    jsonschema.validate(rep, schema("run_report"))


def test_run_four_detectors_and_eta(capsys):
    rep = run_json(capsys, "run", "--builtin", "fig1", "--detectors", "four", "--eta", "0.5", "--r", "2")
    assert rep["success"] == pytest.approx(0.25 * 2 * 4 / 25, abs=1e-12)
    assert rep["fidelity"] == pytest.approx(1.0, abs=1e-12)


def test_run_missing_file(capsys):
    assert main(["run", "--circuit", "missing.pcl"]) == 2
    assert "no such file" in capsys.readouterr().err


def test_run_rejects_zero_r(capsys):
    assert main(["run", "--builtin", "fig1", "--r", "0", "--phi", "0"]) == 2
    assert "r must be > 0" in capsys.readouterr().err


def test_run_bad_argument_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["run", "--builtin", "fig9"])
    assert e.value.code == 2


def test_run_circuit_file_with_herald(tmp_path, capsys):
    p = tmp_path / "fig1.pcl"
    p.write_text(corpus_text("fig1"))
    rep = run_json(capsys, "run", "--circuit", str(p), "--herald", "Dx,Dz", "--r", "0.5")
    assert rep["success"] == pytest.approx(0.5**2 / (2 * 1.25**2), abs=1e-12)
    # Dx+Dz heralds phi-, so the phi+ fidelity is zero
    assert rep["fidelity"] == pytest.approx(0, abs=1e-12)
    jsonschema.validate(rep, schema("run_report"))


def test_run_invalid_circuit_file(tmp_path, capsys):
    p = tmp_path / "bad.pcl"
    p.write_text("beam 1\npbs in=(1,3) out=(1p,3p)\n")
    assert main(["run", "--circuit", str(p)]) == 2
    assert "undeclared beam '3' at line 2" in capsys.readouterr().err


def test_run_csv(capsys):
    assert main(["run", "--builtin", "fig1", "--format", "csv"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert {r["pattern"] for r in rows} == {"none", "Dx", "Dw", "Dx+Dw"}


def test_sweep_grid(capsys):
    assert main(["sweep", "--r", "0.5,1,2", "--phi", "0,pi/2"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 6
    assert all(float(r["fidelity"]) == pytest.approx(1.0, abs=1e-12) for r in rows)
    best = max(rows, key=lambda r: float(r["success_two"]))
    assert float(best["r"]) == 1.0
    for r in rows:
        assert float(r["success_four"]) == pytest.approx(4 * float(r["success_two"]), abs=1e-12)


def test_sweep_empty_grid(capsys):
    assert main(["sweep", "--r", ""]) == 2


def test_fig2_exact(capsys):
    rep = run_json(capsys, "fig2", "--exact", "--trials", "40000")
    net = [e["count"] for e in rep["net"]["bare"].values()]
    assert net == pytest.approx([0, 0, 1000, 1000], abs=1e-6)
    assert rep["conclusion1"] is True and rep["conclusion2"] is True
    assert rep["N_expected"] == pytest.approx(1000)
    jsonschema.validate(rep, schema("protocol_report"))
    assert "conclusion 1 (no plates): true" in run_json.err


def test_fig2_exact_hwp_table(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["fig2", "--exact", "--trials", "40000", "--hwp", "--out", str(out)]) == 0
    table = capsys.readouterr().out
    assert "with pi/4 plates" in table
    rep = json.loads(out.read_text())
    mix = [e["count"] for e in rep["runs"]["mixture_hwp"].values()]
    assert mix == pytest.approx([500, 500, 1500, 1500], abs=1e-6)
    assert list(rep["hwp_ratio"].values()) == pytest.approx([0.5, 0.5, 1.5, 1.5], abs=1e-9)


def test_fig2_seeded_reports_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["fig2", "--trials", "40000", "--seed", "7", "--out", str(a)]) == 0
    assert main(["fig2", "--trials", "40000", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    jsonschema.validate(rep, schema("protocol_report"))
    assert rep["seed"] == 7


def test_fig2_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PHOTONLACE_SEED", "7")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["fig2", "--trials", "40000", "--out", str(a)]) == 0
    assert main(["fig2", "--trials", "40000", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    monkeypatch.setenv("PHOTONLACE_SEED", "seven")
    assert main(["fig2", "--trials", "40000", "--out", str(a)]) == 2


def test_fig2_too_few_trials(capsys):
    assert main(["fig2", "--trials", "10"]) == 2


def test_fig2_csv(capsys):
    assert main(["fig2", "--exact", "--trials", "4000", "--format", "csv"]) == 0
    out = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {r["run"] for r in rows} >= {"u1_bare", "mixture_hwp", "net_bare"}
    assert len(rows) == 8 * 4
