"""Command line entry point: ``qtorus run|diff|validate``."""

from __future__ import annotations

import argparse
import sys

import yaml

from .config import ConfigError, load_config
from .runner import THREADS_ENV, compare_baseline, run_experiment

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_CONFIG = 2


def _run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = run_experiment(cfg, args.output)
    for task in manifest.tasks:
        line = f"{task.status:6s} {task.name}"
        print(line + (f": {task.message}" if task.message else ""))
    return EXIT_OK if manifest.ok else EXIT_NUMERIC


def _validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(yaml.safe_dump(cfg.resolved(), sort_keys=True), end="")
    return EXIT_OK


def _diff(args) -> int:
    try:
        report = compare_baseline(args.manifest, args.baseline)
    except (OSError, KeyError, ValueError) as exc:
        print(f"cannot compare: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for line in report.lines():
        print(line)
    if report.ok:
        print("no differences")
    return EXIT_OK if report.ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtorus",
        description=f"Quantized torus map experiments. Thread count: ${THREADS_ENV} (default 1).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides the config)")
    p.set_defaults(func=_run)
    p = sub.add_parser("validate", help="validate a config and print it with defaults")
    p.add_argument("config")
    p.set_defaults(func=_validate)
    p = sub.add_parser("diff", help="compare a run against a baseline directory")
    p.add_argument("manifest")
    p.add_argument("baseline")
    p.set_defaults(func=_diff)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
