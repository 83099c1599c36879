"""Command-line interface: ``drtecm <command> [options]``.

Exit codes: 0 success, 1 validation failure (KK gate, invalid data,
structural problems), 2 usage error (bad flags, missing inputs, stage-order
violations). ``EIS2MOD_THREADS`` caps the worker threads used inside a stage.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import pipeline
from .config import coerce_value, load_config
from .errors import ConfigurationError, DrtEcmError, PipelineError

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2

# flag dest -> PipelineConfig field
FLAG_FIELDS = {
    "lam": "lam",
    "points_per_decade": "points_per_decade",
    "kk_threshold": "kk_threshold",
    "inductance_mode": "inductance_mode",
    "ladder_size": "ladder_size",
    "peak_count": "peak_count",
    "timestep": "timestep",
    "voltage_interval": "voltage_interval",
}


def _common(p, drt=False, kk=False, pre=False, build=False, sim=False):
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--plot", action="store_true", help="also write SVG charts (needs matplotlib)")
    if kk or drt:
        p.add_argument("--kk-threshold", dest="kk_threshold", help="KK gate on max relative residual (0.01)")
    if pre:
        p.add_argument("--inductance-mode", dest="inductance_mode", choices=("subtract_rl", "subtract_l", "truncate"))
    if drt:
        p.add_argument("--lambda", dest="lam", help="regularization weight or 'lcurve' (1e-5)")
        p.add_argument("--ppd", dest="points_per_decade", help="tau grid points per decade (10)")
        p.add_argument("--peaks", dest="peak_count", help="Gaussian count: integer, 'detected' or 'auto'")
    if build:
        p.add_argument("--ladder-size", dest="ladder_size", help="Warburg ladder branches (5)")
    if sim:
        p.add_argument("--ts", dest="timestep", help="simulation timestep in seconds (1.0)")
        p.add_argument("--interval", dest="voltage_interval", help="RMSE reference interval in volts (1.2)")


def build_parser():
    parser = argparse.ArgumentParser(prog="drtecm", description="EIS to equivalent-circuit model pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="Kramers-Kronig check of every spectrum")
    p.add_argument("--eis", required=True)
    p.add_argument("--out", required=True)
    _common(p, kk=True)

    p = sub.add_parser("preprocess", help="inductance correction and cross-cell averaging")
    p.add_argument("--eis", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-average", dest="average", action="store_false", help="keep cells separate")
    _common(p, pre=True)

    p = sub.add_parser("drt", help="distribution of relaxation times per spectrum")
    p.add_argument("--eis", required=True, help="preprocessed EIS CSV")
    p.add_argument("--ocv", help="OCV CSV; C_D = dQ/dV is subtracted (fitted when absent)")
    p.add_argument("--out", required=True)
    p.add_argument("--allow-raw", action="store_true", help="accept spectra that were not preprocessed")
    _common(p, drt=True)

    p = sub.add_parser("extract", help="peak fitting, RC mapping and attribution")
    p.add_argument("--drt", required=True, help="directory of DRT results (<out>/drt)")
    p.add_argument("--out", required=True)
    _common(p, drt=True)

    p = sub.add_parser("build", help="assemble the ECM model file")
    p.add_argument("--peaks", required=True)
    p.add_argument("--ocv", required=True)
    p.add_argument("--out", required=True, help="model JSON path")
    _common(p, build=True)

    p = sub.add_parser("simulate", help="simulate a current profile")
    p.add_argument("--model", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--out", required=True, help="result CSV path")
    p.add_argument("--temp", type=float, help="constant temperature in C (overrides the profile)")
    start = p.add_mutually_exclusive_group(required=True)
    start.add_argument("--soc0", type=float)
    start.add_argument("--voc0", type=float)
    _common(p, sim=True)

    p = sub.add_parser("evaluate", help="RMSE of a simulation against a reference trace")
    p.add_argument("--sim", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--report", help="RMSE report CSV (default: rmse_report.csv next to --sim)")
    p.add_argument("--name")
    _common(p, sim=True)

    p = sub.add_parser("run-all", help="validate, preprocess, drt, extract, build, simulate, evaluate")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--bundled", action="store_true", help="use the shipped synthetic dataset")
    src.add_argument("--eis")
    p.add_argument("--ocv")
    p.add_argument("--profiles", help="directory with profile_<name>.csv, .soc0 and reference_<name>.csv")
    p.add_argument("--out", required=True)
    _common(p, drt=True, pre=True, build=True, sim=True)

    p = sub.add_parser("synth", help="write the synthetic dataset with reference traces")
    p.add_argument("--out", required=True)
    return parser


def _config(args):
    overrides = {}
    for dest, field in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[field] = coerce_value(field, str(value))
    return load_config(getattr(args, "config", None), overrides)


def _run(args):
    if args.command == "synth":
        from .synthetic import write_bundle

        write_bundle(args.out)
        return {"written": args.out}, EXIT_OK
    cfg = _config(args)
    if args.command == "validate":
        summary = pipeline.stage_validate(args.eis, args.out, cfg, plot=args.plot)
        for row in summary["spectra"]:
            print(f"{row['key']}: max |res| {row['max_abs_residual']:.3e} {'pass' if row['passed'] else 'FAIL'}",
                  file=sys.stderr)
        return summary, EXIT_OK if summary["passed"] else EXIT_INVALID
    if args.command == "preprocess":
        return pipeline.stage_preprocess(args.eis, args.out, cfg, average=args.average, plot=args.plot), EXIT_OK
    if args.command == "drt":
        return pipeline.stage_drt(args.eis, args.out, cfg, ocv_path=args.ocv, allow_raw=args.allow_raw,
                                  plot=args.plot), EXIT_OK
    if args.command == "extract":
        return pipeline.stage_extract(args.drt, args.out, cfg), EXIT_OK
    if args.command == "build":
        return pipeline.stage_build(args.peaks, args.ocv, args.out, cfg), EXIT_OK
    if args.command == "simulate":
        return pipeline.stage_simulate(args.model, args.profile, args.out, cfg, soc0=args.soc0, v_oc0=args.voc0,
                                       temperature=args.temp, plot=args.plot), EXIT_OK
    if args.command == "evaluate":
        return pipeline.stage_evaluate(args.sim, args.ref, cfg, args.report, args.name, plot=args.plot), EXIT_OK
    if args.command == "run-all":
        if args.bundled:
            d = pipeline.bundled_dataset()
            eis, ocv, profiles = d / "eis.csv", d / "ocv.csv", args.profiles or d
        else:
            if not args.ocv:
                raise PipelineError("run-all needs --ocv with --eis")
            eis, ocv, profiles = Path(args.eis), Path(args.ocv), args.profiles
        return pipeline.run_all(eis, ocv, args.out, cfg, profiles, plot=args.plot), EXIT_OK
    raise PipelineError(f"unknown command {args.command!r}")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            result, code = _run(args)
    except (PipelineError, ConfigurationError, FileNotFoundError) as exc:
        print(f"drtecm {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DrtEcmError as exc:
        print(f"drtecm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps(result, indent=1, default=str))
    return code


if __name__ == "__main__":
    sys.exit(main())
