"""Command-line front end.

    photonlace run   --builtin fig1 --r 1 --phi 0
    photonlace sweep --r 0.5,1,2 --phi 0,pi/2
    photonlace fig2  --exact --trials 40000

Exit status: 0 on success, 2 on usage or validation errors, 3 on an internal
assertion failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from . import schemes
from .circuitlang import corpus_text, load, parse, parse_expr, to_circuit
from .detect import ClickPattern, click_probability, condition, fidelity, outcome_distribution
from .elements import apply_circuit
from .fock import Ensemble, FockError, modes_of
from .schemes import RawStateParams

SEED_ENV = "PHOTONLACE_SEED"
DEFAULT_TRIALS = 40000


class UsageError(Exception):
    pass


def _expr(text: str) -> float:
    try:
        return parse_expr(text.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _grid(text: str) -> list[float]:
    return [_expr(t) for t in text.split(",") if t.strip()]


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _emit(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# -- run -----------------------------------------------------------------------


def _outcome_rows(state, detectors, keep):
    target = schemes.bell("phi+", *keep) if keep else None
    rows = []
    for o in outcome_distribution(state, detectors, conditionals=False):
        row = {"pattern": o.pattern.label, "probability": o.probability}
        if target is not None:
            row["fidelity"] = fidelity(condition(state, detectors, o.pattern, keep), target)
        rows.append(row)
    return rows


def cmd_run(args) -> dict:
    keep = tuple(b.strip() for b in args.keep.split(",")) if args.keep else None
    if args.builtin == "fig1" or args.builtin is None and args.circuit is None:
        p = RawStateParams(args.r, args.phi)
        res = schemes.concentrate(p, args.detectors, args.eta)
        dets = schemes.fig1_detectors(args.detectors, args.eta)
        state = apply_circuit(schemes.raw_state(p), schemes.fig1_circuit())
        report = {
            "circuit": "fig1",
            "detectors": args.detectors,
            "r": p.r,
            "phi": p.phi,
            "eta": args.eta,
            "success": res.success,
            "fidelity": res.fidelity,
            "heralds": [
                {"pattern": k, "probability": res.probabilities[k], "fidelity": res.fidelities[k]}
                for k in res.probabilities
            ],
            "outcomes": _outcome_rows(state, dets, keep or schemes.OUTPUT_BEAMS),
        }
        return report

    if args.builtin == "fig2":
        lowered = to_circuit(parse(corpus_text("fig2")), hwp_inserted=args.hwp)
        name = "fig2"
    else:
        try:
            spec = load(args.circuit)
        except FileNotFoundError:
            raise UsageError(f"no such file: {args.circuit}") from None
        lowered = to_circuit(spec, hwp_inserted=args.hwp or None)
        name = args.circuit
    params = RawStateParams(
        args.r if args.r_given else lowered.params.r,
        args.phi if args.phi_given else lowered.params.phi,
    )
    if lowered.source_kind is None:
        raise UsageError("circuit declares no source")
    dets = [d.with_efficiency(args.eta) for d in lowered.detectors] if args.eta_given else list(lowered.detectors)
    source = schemes.make_source(lowered.source_kind, params, lowered.phases)
    if isinstance(source, Ensemble):
        state = source.map(lambda s: apply_circuit(s, lowered.circuit))
    else:
        state = apply_circuit(source, lowered.circuit)
    if keep is None:
        monitored = {m for d in dets for m in d.modes}
        live = lowered.circuit.output_beams
        if all(b in live and not set(modes_of(b)) & monitored for b in schemes.OUTPUT_BEAMS):
            keep = schemes.OUTPUT_BEAMS
    report = {
        "circuit": name,
        "source": lowered.source_kind,
        "r": params.r,
        "phi": params.phi,
        "eta": args.eta if args.eta_given else None,
        "outcomes": _outcome_rows(state, dets, keep),
    }
    if args.herald:
        pattern = ClickPattern.of(dets, [h.strip() for h in args.herald.split(",")])
        report["success"] = click_probability(state, dets, pattern)
        if keep and report["success"] > 0:
            report["fidelity"] = fidelity(condition(state, dets, pattern, keep), schemes.bell("phi+", *keep))
    return report


def _run_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    has_fid = any("fidelity" in r for r in report["outcomes"])
    w.writerow(["pattern", "probability"] + (["fidelity"] if has_fid else []))
    for r in report["outcomes"]:
        w.writerow([r["pattern"], repr(r["probability"])] + ([repr(r.get("fidelity", ""))] if has_fid else []))
    return buf.getvalue()


# -- sweep ---------------------------------------------------------------------

SWEEP_COLUMNS = ("r", "phi", "success_two", "success_four", "fidelity")


def cmd_sweep(args) -> list[dict]:
    if not args.r or not args.phi:
        raise UsageError("sweep grids must be non-empty")
    rows = []
    for r in args.r:
        for phi in args.phi:
            p = RawStateParams(r, phi)
            two = schemes.concentrate(p, "two", args.eta)
            four = schemes.concentrate(p, "four", args.eta)
            rows.append({
                "r": r,
                "phi": phi,
                "success_two": two.success,
                "success_four": four.success,
                "fidelity": min(two.fidelity, four.fidelity),
            })
    return rows


def _sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([repr(row[c]) for c in SWEEP_COLUMNS])
    return buf.getvalue()


# -- fig2 ----------------------------------------------------------------------


def cmd_fig2(args) -> schemes.ProtocolReport:
    if not args.exact and args.trials < 1000:
        raise UsageError("sampling mode needs --trials >= 1000")
    if args.trials < 1000:
        raise UsageError("--trials must be >= 1000")
    return schemes.fig2_protocol(args.trials, args.seed, args.exact, RawStateParams(args.r, args.phi), args.eta)


def format_fig2_table(report: schemes.ProtocolReport, kind: str) -> str:
    title = "with pi/4 plates on 2', 3'" if kind == "hwp" else "without plates"
    n = report.n_expected
    lines = [f"4-fold coincidences {title} (N = {n:.6g}, trials = {report.trials}, exact = {report.exact})"]
    lines.append(f"{'pattern':<16}{'u1':>10}{'u2':>10}{'mixture':>10}{'net':>12}{'sigma':>9}{'mix/N':>8}{'net/N':>8}")
    for row in report.table(kind):
        lines.append(
            f"{row['pattern']:<16}{row['u1']:>10.6g}{row['u2']:>10.6g}{row['mixture']:>10.6g}"
            f"{row['net']:>12.6g}{row['sigma']:>9.4g}{row['mixture_over_N']:>8.3f}{row['net_over_N']:>8.3f}"
        )
    lines.append(f"conclusion 1 (no plates): {str(report.conclusion1).lower()}")
    lines.append(f"conclusion 2 (plates):    {str(report.conclusion2).lower()}")
    return "\n".join(lines) + "\n"


def _fig2_csv(report: schemes.ProtocolReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "pattern", "count", "probability", "sigma"])
    d = report.to_dict()
    for run, entries in d["runs"].items():
        for label, e in entries.items():
            w.writerow([run, label, repr(e["count"]), repr(e["prob"]), repr(e["sigma"])])
    for kind, entries in d["net"].items():
        for label, e in entries.items():
            w.writerow([f"net_{kind}", label, repr(e["count"]), "", repr(e["sigma"])])
    return buf.getvalue()


# -- entry point ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="photonlace", description="Few-photon linear-optics concentration simulator.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="exact outcome distribution and heralded fidelities")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--builtin", choices=("fig1", "fig2"))
    src.add_argument("--circuit", help="path to a .pcl circuit file")
    run.add_argument("--r", type=_expr, default=None)
    run.add_argument("--phi", type=_expr, default=None)
    run.add_argument("--eta", type=float, default=None)
    run.add_argument("--detectors", choices=("two", "four"), default="two", help="fig1 detector set")
    run.add_argument("--herald", help="comma-separated detector ids that must click (circuit files)")
    run.add_argument("--keep", help="comma-separated output beams for the fidelity check")
    run.add_argument("--hwp", action="store_true", help="insert pi/4 plates before polarization analysis")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--out", default="-")

    sw = sub.add_parser("sweep", help="success and fidelity over an (r, phi) grid")
    sw.add_argument("--r", type=_grid, default=[0.5, 1.0, 2.0])
    sw.add_argument("--phi", type=_grid, default=[0.0])
    sw.add_argument("--eta", type=float, default=1.0)
    sw.add_argument("--format", choices=("json", "csv"), default="csv")
    sw.add_argument("--out", default="-")

    f2 = sub.add_parser("fig2", help="calibrated count-subtraction verification protocol")
    f2.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    f2.add_argument("--seed", type=int, default=None)
    f2.add_argument("--exact", action="store_true", help="expected counts instead of sampling")
    f2.add_argument("--hwp", action="store_true", help="show the run with pi/4 plates on 2', 3'")
    f2.add_argument("--r", type=_expr, default=1.0)
    f2.add_argument("--phi", type=_expr, default=0.0)
    f2.add_argument("--eta", type=float, default=1.0)
    f2.add_argument("--format", choices=("json", "csv"), default="json")
    f2.add_argument("--out", default="-")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "run":
            args.r_given, args.phi_given, args.eta_given = args.r is not None, args.phi is not None, args.eta is not None
            args.r = 1.0 if args.r is None else args.r
            args.phi = 0.0 if args.phi is None else args.phi
            args.eta = 1.0 if args.eta is None else args.eta
            report = cmd_run(args)
            _emit(_dump(report) if args.format == "json" else _run_csv(report), args.out)
        elif args.command == "sweep":
            rows = cmd_sweep(args)
            _emit(_dump(rows) if args.format == "json" else _sweep_csv(rows), args.out)
        else:
            if args.seed is None:
                args.seed = _default_seed()
            report = cmd_fig2(args)
            body = _dump(report.to_dict()) if args.format == "json" else _fig2_csv(report)
            _emit(body, args.out)
            table = format_fig2_table(report, "hwp" if args.hwp else "bare")
            (sys.stderr if args.out in (None, "-") else sys.stdout).write(table)
    except (UsageError, FockError, OSError) as e:
        msg = f"no such file: {e.filename}" if isinstance(e, FileNotFoundError) else str(e)
        print(f"photonlace: error: {msg}", file=sys.stderr)
        return 2
    except AssertionError as e:
        print(f"photonlace: internal error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
