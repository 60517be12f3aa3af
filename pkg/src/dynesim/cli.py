"""Command-line entry points.

Verbs: ``run``, ``sweep-het``, ``validate``, ``modeshape``, ``export``.
Exit codes: 0 success, 2 configuration error, 3 numerical-integrity
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .engine import NumericalIntegrityError
from .experiment import (ConfigError, ExperimentConfig, build_model,
                         export_figure_data, load_manifest, parse_config,
                         run_experiment, run_validation, sweep_heterodyne,
                         write_config, FIGURES)
from .modeshape import export_mode_csv


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma-t2-hz", dest="gamma_t2", type=float)
    p.add_argument("--gamma-max-hz", dest="gamma_max", type=float)
    p.add_argument("--delay-ns", dest="delay", type=float)
    p.add_argument("--filter-ns", dest="filter_tau", type=float)
    p.add_argument("--f-het-hz", dest="f_het", type=float)
    p.add_argument("--tau-us", dest="tau", type=float)
    p.add_argument("--t-total-us", dest="t_total", type=float)
    p.add_argument("--dt-ns", dest="dt", type=float)
    p.add_argument("--traj", dest="n_traj", type=int)
    p.add_argument("--theta-count", type=int)
    p.add_argument("--seed", dest="master_seed", type=int)
    p.add_argument("--scheme", dest="schemes", action="append",
                   help="repeatable; e.g. --scheme adaptive --scheme heterodyne")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--workers", type=int)


_SCALED = {"delay": 1e-9, "filter_tau": 1e-9, "tau": 1e-6,
           "t_total": 1e-6, "dt": 1e-9}


def _config_from_args(args) -> ExperimentConfig:
    base = parse_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for f in dataclasses.fields(ExperimentConfig):
        val = getattr(args, f.name, None)
        if val is None:
            continue
        if f.name in _SCALED:
            val = val * _SCALED[f.name]
        if f.name == "schemes":
            val = tuple(val)
        overrides[f.name] = val
    return dataclasses.replace(base, **overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dynesim",
        description="Monte Carlo simulator of feedback-controlled dyne "
                    "phase measurement",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="full scheme-cycling experiment")
    _add_model_flags(p_run)

    p_sweep = sub.add_parser("sweep-het", help="efficiency vs heterodyne frequency")
    _add_model_flags(p_sweep)
    p_sweep.add_argument("--f-set-hz", type=float, nargs="+", required=True)

    p_val = sub.add_parser("validate", help="mixed-prior filter validation")
    _add_model_flags(p_val)
    p_val.add_argument("--t-f-us", type=float, nargs="+",
                       default=[2.0, 4.0, 6.0, 8.0, 10.0])
    p_val.add_argument("--mis-eta-factor", type=float, default=1.0)

    p_mode = sub.add_parser("modeshape", help="export the emitted mode CSV")
    _add_model_flags(p_mode)
    p_mode.add_argument("--out", default="modeshape.csv")

    p_exp = sub.add_parser("export", help="figure-data CSVs from a finished run")
    p_exp.add_argument("--manifest", required=True)
    p_exp.add_argument("--figure", required=True, choices=FIGURES)
    p_exp.add_argument("--out-dir")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalIntegrityError as exc:
        print(f"numerical integrity failure: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    if args.verb == "run":
        config = _config_from_args(args)
        manifest = run_experiment(config)
        print(manifest.files["manifest"])
        for scheme, s in sorted(manifest.summaries.items()):
            print(f"{scheme}: n={s['n']} holevo={s['holevo']:.4f} "
                  f"F={s['efficiency']:.4f}")
        return 0

    if args.verb == "sweep-het":
        config = _config_from_args(args)
        table = sweep_heterodyne(config, args.f_set_hz)
        os.makedirs(config.out_dir, exist_ok=True)
        path = os.path.join(config.out_dir, "sweep_het.csv")
        with open(path, "w") as fh:
            fh.write("f_het_hz,efficiency,efficiency_se,holevo,n\n")
            for row in table:
                fh.write("%.17g,%.17g,%.17g,%.17g,%d\n" % (
                    row["f_het"], row["efficiency"], row["efficiency_se"],
                    row["holevo"], row["n"]))
        print(path)
        return 0

    if args.verb == "validate":
        config = _config_from_args(args)
        reports = run_validation(config, [t * 1e-6 for t in args.t_f_us],
                                 filter_eta_factor=args.mis_eta_factor)
        os.makedirs(config.out_dir, exist_ok=True)
        path = os.path.join(config.out_dir, "validation.json")
        payload = {}
        ok = True
        for (scheme, t_f), report in reports.items():
            payload[f"{scheme}@{t_f * 1e6:.3g}us"] = {
                "passes_3sigma": report.passes(),
                "max_abs_z": report.max_abs_z(),
                "n_bins": len(report.bins),
                "n_skipped": report.n_skipped,
            }
            ok = ok and report.passes()
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        print(path)
        print("validation " + ("PASS" if ok else "FAIL"))
        return 0

    if args.verb == "modeshape":
        config = _config_from_args(args)
        _, mode = build_model(config)
        export_mode_csv(mode, args.out)
        print(args.out)
        return 0

    if args.verb == "export":
        manifest = load_manifest(args.manifest)
        for path in export_figure_data(manifest, args.figure, args.out_dir):
            print(path)
        return 0

    raise AssertionError(f"unhandled verb {args.verb}")


if __name__ == "__main__":
    sys.exit(main())
