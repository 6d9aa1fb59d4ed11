"""Command line interface: run experiments, plot results, run identity checks."""

from __future__ import annotations

import argparse
import sys

from . import __version__, selftest
from .harness import PRESETS, ExperimentConfig, emit_outputs, plot_mse_curves, run_experiment

_OVERRIDES = {
    "problem_type": ("--problem-type", int, (1, 2, 3)),
    "strategy": ("--strategy", str, None),
    "estimator": ("--estimator", str, ("cheat", "direct", "quadratic")),
    "batch_mode": ("--batch-mode", str, ("single", "topm", "eigen")),
    "n_init": ("--init-points", int, None),
    "n_rounds": ("--rounds", int, None),
    "batch_size": ("--batch-size", int, None),
    "grid_resolution": ("--grid", int, None),
    "n_replicates": ("--replicates", int, None),
    "base_seed": ("--seed", int, None),
    "out_dir": ("--out", str, None),
    "workers": ("--workers", int, None),
    "noise_scale": ("--noise-scale", float, None),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aicau", description=__doc__)
    parser.add_argument("--version", action="version", version=f"aicau {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment configuration")
    run.add_argument("--config", help="JSON config file to start from")
    run.add_argument("--preset", choices=sorted(PRESETS), help="named scale preset")
    run.add_argument("--plot", action="store_true", help="also write mse_curve.svg")
    for field, (flag, ftype, choices) in _OVERRIDES.items():
        run.add_argument(flag, dest=field, type=ftype, choices=choices, default=None)

    plot = sub.add_parser("plot", help="plot median MSE curves from saved runs")
    plot.add_argument("--in", dest="in_dir", required=True, help="directory containing runs.csv files")

    sub.add_parser("selftest", help="run the mathematical identity suites")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    data = ExperimentConfig.load(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    if args.preset:
        data.update(PRESETS[args.preset])
    for field in _OVERRIDES:
        value = getattr(args, field)
        if value is not None:
            data[field] = value
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "selftest":
        results = selftest.run_all()
        for result in results:
            status = "PASS" if result.passed else "FAIL"
            print(f"[{status}] {result.name}: {result.detail}")
        return 0 if all(r.passed for r in results) else 1

    if args.command == "plot":
        path = plot_mse_curves(args.in_dir)
        print(f"wrote {path}")
        return 0

    config = _config_from_args(args)
    records = run_experiment(config)
    paths = emit_outputs(records, config, plot=args.plot)
    n_failed = sum(not r.completed for r in records)
    for record in records:
        if not record.completed:
            print(f"replicate {record.replicate_seed} FAILED: {record.error}", file=sys.stderr)
    print(f"wrote {paths['runs']} ({len(records) - n_failed}/{len(records)} replicates complete)")
    return 1 if n_failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
