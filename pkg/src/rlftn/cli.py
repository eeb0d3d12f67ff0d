"""Command line entry point: ``rlftn <subcommand> ...``.

Exit codes: 0 success, 1 a ``--check`` criterion failed, 2 usage or config
error, 3 I/O error, 4 numerical failure, 5 analysis error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, matio, plotting
from .bench import CSV_FIELDS, GridPoint, compare_runs, d_scaling, synthetic_speedup
from .config import ConfigError, parse_config
from .exact import chain_free_fermion_energy
from .factorize import FactorizationError, RsvdParams, reconstruction_error, rsvd, tsvd
from .mps import NumericalError
from .report import (
    AnalysisError,
    csv_header,
    write_json,
    write_run_outputs,
    write_table,
)
from .tebd import result_to_dict, run_ground_state

log = logging.getLogger("rlftn")

EXIT_CHECK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_ANALYSIS = 1, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message, code, kind=None, diagnostics=None):
        super().__init__(message)
        self.code = code
        self.kind = kind or type(self).__name__
        self.diagnostics = diagnostics or {}


def _out_dir(args, default="out") -> Path:
    env = os.environ.get("RLFTN_OUT")
    out = Path(env or args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args):
    if not args.config:
        raise CliError("--config is required for this subcommand", EXIT_USAGE, "UsageError")
    cfg = parse_config(args.config)
    over = {
        "seed": args.seed,
        "method": args.method,
        "oversample": args.oversample,
        "power": args.power,
    }
    try:
        return cfg.with_overrides(**over)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE, "ConfigError") from None


def _reference_energy(model):
    if model.kind == "chain" and float(model.S) == 0.5:
        return chain_free_fermion_energy(model.L, model.h)
    return None


def cmd_run_tebd(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg.out)
    if cfg.h_grid:
        log.info("h_grid is ignored by run-tebd; using h = %s", cfg.h)
    model = cfg.build_model()
    trace = out / "spectra_trace.csv" if args.spectra_trace else None
    res = run_ground_state(model, cfg.tebd, spectrum_csv=trace)
    report = result_to_dict(res)
    e_ref = _reference_energy(model)
    if e_ref is not None:
        report["reference"] = {"E_free_fermion": e_ref,
                               "rel_error": abs(res.observables.E - e_ref) / abs(e_ref)}
    write_run_outputs(report, out, figures=not args.no_figures, e_ref=e_ref)
    print(f"E = {res.observables.E!r}  M = {res.observables.M!r}  "
          f"status = {res.state.status}  sweeps = {res.state.sweeps}")
    print(f"wrote {out / 'report.json'}")
    if args.check:
        inv = res.invariants
        ok = (
            res.converged
            and inv["parity_violation"] == 0.0
            and inv["lambda_norm_dev"] <= 1e-10
            and inv["canonical_norm_dev"] <= 1e-10
        )
        if e_ref is not None:
            ok = ok and report["reference"]["rel_error"] <= 1e-5
        print("check:", "PASS" if ok else "FAIL")
        return 0 if ok else EXIT_CHECK
    return 0


def cmd_bench_compare(args) -> int:
    if args.mode == "synthetic":
        return _bench_synthetic(args)
    if args.mode == "dscaling":
        return _bench_dscaling(args)
    cfg = _load_config(args)
    out = _out_dir(args, cfg.out)
    points = [GridPoint(cfg.build_model(h), cfg.tebd) for h in cfg.fields_to_run]
    rep = compare_runs(points, repeats=cfg.repeats, jobs=args.jobs)
    summary = rep.to_dict()
    checks = []
    for p in summary["points"]:
        checks.append({"name": f"{p['label']} dE_rel<=1e-8", "kind": "hard",
                       "value": p["dE_rel"], "passed": p["dE_rel"] <= 1e-8})
        checks.append({"name": f"{p['label']} dM_rel<=1e-6", "kind": "hard",
                       "value": p["dM_rel"], "passed": p["dM_rel"] <= 1e-6})
        checks.append({"name": f"{p['label']} converged", "kind": "hard",
                       "passed": p["converged"]})
    for g in summary["groups"]:
        checks.append({"name": f"{g['model']} chi={g['chi']} tau>1", "kind": "soft",
                       "value": g["tau_geomean"], "passed": g["tau_geomean"] > 1})
    summary["checks"] = checks
    write_table(out / "bench.csv", CSV_FIELDS, rep.csv_rows())
    write_json(out / "bench.json", summary)
    if not args.no_figures:
        plotting.plot_bench(summary, out / "bench.png")
    for c in checks:
        print(f"[{c['kind']}] {'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    hard_ok = all(c["passed"] for c in checks if c["kind"] == "hard")
    return 0 if (hard_ok or not args.check) else EXIT_CHECK


def _bench_synthetic(args) -> int:
    out = _out_dir(args)
    chi = args.rank or 64
    res = synthetic_speedup(args.size, chi, args.repeats, args.seed or 0)
    write_json(out / "synthetic.json", res)
    print(f"n = {res['n']} chi = {chi} tau = {res['tau']:.3f} (soft: tau > 1)")
    return 0


def _bench_dscaling(args) -> int:
    out = _out_dir(args)
    chi = args.rank or 64
    res = d_scaling(tuple(args.d), chi, args.repeats, args.seed or 0)
    write_table(out / "dscaling.csv", csv_header("dscaling.csv"), res["rows"])
    write_json(out / "dscaling.json", res)
    if not args.no_figures:
        plotting.plot_dscaling(res["rows"], out / "dscaling.png")
    for r in res["rows"]:
        print(f"d = {r['d']:3d}  T_T/T_R = {r['tau']:.3f}")
    print(f"slope = {res['slope']:.4f} per unit d, increasing = {res['increasing']}")
    return 0


def cmd_factorize(args) -> int:
    if args.input is None:
        raise CliError("factorize needs an input matrix file", EXIT_USAGE, "UsageError")
    if args.rank is None:
        raise CliError("factorize needs --rank", EXIT_USAGE, "UsageError")
    try:
        A = matio.read_matrix(args.input)
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc.strerror}", EXIT_IO, "IOError") from None
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO, "FormatError") from None
    method = args.method or "tsvd"
    try:
        if method == "tsvd":
            F = tsvd(A, args.rank)
        else:
            F = rsvd(A, RsvdParams(args.rank, args.oversample, 4 if args.power is None else args.power,
                                   args.seed or 0))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE, "ArgumentError") from None
    out = _out_dir(args)
    binary = open(args.input, "rb").read(8) == matio.MAGIC
    ext = "bin" if binary else "csv"
    writer = matio.write_binary if binary else matio.write_csv
    writer(out / f"left.{ext}", F.left)
    writer(out / f"right_adj.{ext}", F.right_adj)
    matio.write_csv(out / "spectrum.csv", F.sigma)
    summary = {
        "input": str(args.input),
        "shape": list(A.shape),
        "dtype": "complex128" if np.iscomplexobj(A) else "float64",
        "method": method,
        "rank": F.rank,
        "sigma": [float(s) for s in F.sigma],
        "discarded_weight": F.discarded_weight,
        "discarded_exact": F.discarded_exact,
        "frobenius_error": reconstruction_error(A, F),
    }
    write_json(out / "factorization.json", summary)
    print((out / "spectrum.csv").read_text().strip())
    return 0


def cmd_analyze(args) -> int:
    from .report import analyze_report

    if args.input is None:
        raise CliError("analyze needs a report.json path", EXIT_USAGE, "UsageError")
    try:
        report = json.loads(Path(args.input).read_text())
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc.strerror}", EXIT_IO, "IOError") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.input}: not JSON ({exc})", EXIT_IO, "FormatError") from None
    fits = analyze_report(report, args.fit, args.bond, args.sector)
    out = _out_dir(args)
    obs = report.get("observables", {})
    if obs.get("entropy"):
        write_table(out / "entropy.csv", csv_header("entropy.csv"),
                    ([j, repr(s)] for j, s in enumerate(obs["entropy"], start=1)))
    if obs.get("spectra"):
        rows = ([int(j), int(q), k, repr(float(v))]
                for j, secs in obs["spectra"].items()
                for q, vals in secs.items()
                for k, v in enumerate(vals, start=1))
        write_table(out / "spectra.csv", csv_header("spectra.csv"), rows)
    write_json(out / "fits.json", {k: v.to_dict() for k, v in fits.items()})
    if not args.no_figures:
        L = report["model"]["L"]
        if obs.get("entropy"):
            plotting.plot_entropy(obs["entropy"], out / "entropy.png", fits.get("calabrese"), L)
        if "powerlaw" in fits:
            j = str(args.bond if args.bond is not None else L // 2)
            plotting.plot_spectrum({args.sector: obs["spectra"][j][str(args.sector)]},
                                   out / "spectrum_fit.png", fits["powerlaw"], f"bond {j}")
    for name, f in fits.items():
        params = ", ".join(f"{k} = {v:.6g}" for k, v in f.params.items())
        print(f"{name}: {params}  (rms {f.residual_rms:.3g}, window {f.window})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (key = value)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", help="output directory (RLFTN_OUT overrides)")
    common.add_argument("--method", choices=["tsvd", "rsvd"])
    common.add_argument("--rank", type=int, help="target rank chi")
    common.add_argument("--oversample", type=int, help="rsvd sample size ell (default 2 chi)")
    common.add_argument("--power", type=int, help="rsvd power iterations q (default 4)")
    common.add_argument("--jobs", type=int, default=1, help="parallel grid runs (default 1)")
    common.add_argument("--check", action="store_true", help="exit nonzero if a hard criterion fails")
    common.add_argument("--json-errors", action="store_true", help="print errors as JSON on stderr")
    common.add_argument("--no-figures", action="store_true", help="skip PNG output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rlftn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rlftn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run-tebd", parents=[common], help="one ground-state run")
    s.add_argument("--spectra-trace", action="store_true",
                   help="dump bond spectra at every energy check")
    s.set_defaults(func=cmd_run_tebd)

    s = sub.add_parser("bench-compare", parents=[common], help="matched tsvd/rsvd timing")
    s.add_argument("--mode", choices=["tebd", "synthetic", "dscaling"], default="tebd")
    s.add_argument("--repeats", type=int, default=3, help="timing repeats (synthetic/dscaling)")
    s.add_argument("--size", type=int, default=2048, help="synthetic matrix size")
    s.add_argument("-d", type=int, nargs="+", default=[8, 16, 32], help="local dimensions")
    s.set_defaults(func=cmd_bench_compare)

    s = sub.add_parser("factorize", parents=[common], help="factorize a matrix file")
    s.add_argument("input", nargs="?", help="RLFMAT01 binary or CSV matrix")
    s.set_defaults(func=cmd_factorize)

    s = sub.add_parser("analyze", parents=[common], help="fits and tables from a report")
    s.add_argument("input", nargs="?", help="report.json from run-tebd")
    s.add_argument("--fit", choices=["all", "powerlaw", "calabrese", "none"], default="all")
    s.add_argument("--bond", type=int)
    s.add_argument("--sector", type=int, default=0)
    s.set_defaults(func=cmd_analyze)
    return p


def _classify(exc) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, ConfigError):
        return CliError(str(exc), EXIT_USAGE, "ConfigError", {"line": exc.line, "source": exc.source})
    if isinstance(exc, AnalysisError):
        return CliError(str(exc), EXIT_ANALYSIS, "AnalysisError")
    if isinstance(exc, (FactorizationError, NumericalError)):
        return CliError(str(exc), EXIT_NUMERIC, type(exc).__name__, _jsonable(exc.diagnostics))
    if isinstance(exc, OSError):
        return CliError(str(exc), EXIT_IO, "IOError")
    return CliError(str(exc), EXIT_USAGE, type(exc).__name__)


def _jsonable(d):
    return json.loads(json.dumps(d, default=lambda o: repr(o)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, AnalysisError, FactorizationError, NumericalError,
            OSError, ValueError) as exc:
        err = _classify(exc)
        if args.json_errors:
            payload = {"error": err.kind, "message": str(err), "exit_code": err.code}
            if err.diagnostics:
                payload["diagnostics"] = err.diagnostics
            print(json.dumps(payload), file=sys.stderr)
        else:
            print(f"rlftn: error: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
