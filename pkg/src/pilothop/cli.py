"""Command-line front end.

    pilothop run <spec.yaml> [--seed N] [--out DIR] [--jobs N]
    pilothop validate <spec.yaml>

Exit codes: 0 success, 2 spec parse error (reported with line/column),
3 invariant violation (reported with the offending field), 4 numeric
failure during execution.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import SpecParseError, parse_spec, validate
from .experiments import format_csv, run_experiment

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_NUMERIC = 4


def _load(path: str):
    p = Path(path)
    if not p.exists():
        raise SpecParseError(f"no such file: {path}")
    return parse_spec(p)


def _cmd_validate(args) -> int:
    try:
        spec = _load(args.spec)
    except SpecParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    diags = validate(spec)
    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{args.spec}: OK")
    return EXIT_OK


def _cmd_run(args) -> int:
    try:
        spec = _load(args.spec)
    except SpecParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    diags = validate(spec)
    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        return EXIT_INVALID
    try:
        outputs = run_experiment(spec, seed_override=args.seed, jobs=args.jobs)
    except (ValueError, ArithmeticError, AssertionError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for suffix, records in outputs.items():
        path = out_dir / f"{spec.out_prefix}_{suffix}.csv"
        path.write_text(format_csv(records))
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pilothop",
        description="Random pilot-and-data access: bounds, optimization, and protocol simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment spec and write CSVs")
    run_p.add_argument("spec", help="path to the experiment YAML file")
    run_p.add_argument("--seed", type=int, default=None, help="override the system seed")
    run_p.add_argument("--out", default=".", help="output directory for CSV files")
    run_p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweep points")
    run_p.set_defaults(func=_cmd_run)

    val_p = sub.add_parser("validate", help="check an experiment spec without running it")
    val_p.add_argument("spec", help="path to the experiment YAML file")
    val_p.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
