"""Command-line entry point.

Usage:
    hwmimo run <config.json> [--out DIR] [--seed S] [--trials T]
               [--mode closed|mc|both] [--workers W]

Exit codes: 0 success, 2 configuration/validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError
from .experiments import parse_config, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hwmimo",
        description="Massive MIMO uplink experiments with hardware imperfections")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute an experiment configuration")
    runp.add_argument("config", help="JSON experiment description")
    runp.add_argument("--out", default=".", help="output directory (default: .)")
    runp.add_argument("--seed", type=int, default=None, help="override the master seed")
    runp.add_argument("--trials", type=int, default=None,
                      help="override the Monte Carlo trial count")
    runp.add_argument("--mode", choices=("closed", "mc", "both"), default=None,
                      help="closed-form sweep, Monte Carlo, or both")
    runp.add_argument("--workers", type=int, default=None,
                      help="worker processes for Monte Carlo chunks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"{args.config}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
        config = parse_config(doc, seed=args.seed, trials=args.trials,
                              mode=args.mode, workers=args.workers)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = run(config, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to exit code
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {result.csv_path}")
    if result.per_user_path:
        print(f"wrote {result.per_user_path}")
    print(f"wrote {result.manifest_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
