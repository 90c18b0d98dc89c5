"""Command-line entry points: run, list, plot, validate.

Exit codes: 0 success, 2 validation failure, 3 numerical-divergence flag.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config, run_experiment, validate_config
from .experiments import list_experiments

DIVERGENCE_KEYS = ("diverged", "budget_flag", "n_overflow")


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        summary = run_experiment(cfg)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    print(f"run directory: {summary.run_dir}")
    print(f"digest: {summary.digest}")
    for key, val in sorted(summary.headline.items()):
        print(f"  {key} = {val}")
    for key in DIVERGENCE_KEYS:
        val = summary.headline.get(key)
        if val:
            print(f"numerical divergence flag raised: {key} = {val}", file=sys.stderr)
            return 3
    return 0


def _cmd_list(_args) -> int:
    for entry in list_experiments():
        print(f"{entry['name']}  [acceptance criterion {entry['criterion']}]")
        print(f"    {entry['claim']}")
        req = ", ".join(sorted(entry["params"]) + ["master_seed"])
        print(f"    params: {req}")
    return 0


def _cmd_plot(args) -> int:
    from .plotting import emit_plot_data

    try:
        csv_path, png_path = emit_plot_data(args.run_dir, args.kind)
    except (FileNotFoundError, ValueError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {csv_path}")
    print(f"wrote {png_path}")
    return 0


def _cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
        validate_config(cfg)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(cfg.echo(), indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fbmlab",
        description="numerical laboratory for singular SDEs driven by fBm",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config")
    p_run.set_defaults(fn=_cmd_run)
    p_list = sub.add_parser("list", help="list available experiments")
    p_list.set_defaults(fn=_cmd_list)
    p_plot = sub.add_parser("plot", help="emit plot data and figure for a run")
    p_plot.add_argument("run_dir")
    p_plot.add_argument("kind", choices=["scaling", "levels", "fractions"])
    p_plot.set_defaults(fn=_cmd_plot)
    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")
    p_val.set_defaults(fn=_cmd_validate)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
