"""Command-line front end: run or validate scenario files."""

from __future__ import annotations

import argparse
import sys

from .errors import ScenarioError
from .scenario import parse_scenario, run_scenario

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ggkdv",
        description="Coupled-KdV boundary control and spectral certificates",
    )
    sub = parser.add_subparsers(dest="action", required=True)

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario", help="path to the scenario file")
    run.add_argument("--output-dir", default=None, help="artifact directory")
    run.add_argument("--seed", type=int, default=None, help="override the seed")

    val = sub.add_parser("validate", help="parse a scenario file and exit")
    val.add_argument("scenario", help="path to the scenario file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.action == "validate":
        try:
            parse_scenario(args.scenario)
        except ScenarioError as exc:
            print(f"invalid scenario: {exc}", file=sys.stderr)
            return 2
        print("scenario ok")
        return 0
    result = run_scenario(args.scenario, output_dir=args.output_dir, seed=args.seed)
    if result.exit_code != 0:
        print(f"error: {result.message}", file=sys.stderr)
    else:
        for name in sorted(result.artifacts):
            print(f"wrote {name}")
    return result.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
