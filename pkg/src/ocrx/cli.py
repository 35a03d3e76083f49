"""Command line front end: ``ocrx run <program>`` and ``ocrx gen-file``."""

from __future__ import annotations

import argparse
import sys

from .core import MODES, PARTITION_IMPLS, PLACEMENTS
from .harness import RunConfig, gen_fixture, run_program
from .programs import REGISTRY

EXIT_USAGE = 2
EXIT_IO = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocrx", description="Run task-runtime example programs.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a registered program to completion")
    run.add_argument("program", choices=sorted(REGISTRY))
    run.add_argument("--nodes", type=int, default=1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--mode", choices=MODES, default="deferred")
    run.add_argument("--placement", choices=PLACEMENTS, default="round-robin")
    run.add_argument("--partition-impl", choices=PARTITION_IMPLS, default="zero-copy")
    run.add_argument("--trace", metavar="FILE")
    run.add_argument("--fixture", metavar="PATH")

    gen = sub.add_parser("gen-file", help="write COUNT little-endian u32 values 1..COUNT")
    gen.add_argument("path")
    gen.add_argument("count", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0

    if args.command == "gen-file":
        if args.count < 0:
            print("count must be non-negative", file=sys.stderr)
            return EXIT_USAGE
        try:
            gen_fixture(args.path, args.count)
        except OSError as exc:
            print(f"cannot write {args.path}: {exc}", file=sys.stderr)
            return EXIT_IO
        return 0

    if args.nodes < 1:
        print("--nodes must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    cfg = RunConfig(
        program=args.program,
        nodes=args.nodes,
        seed=args.seed,
        mode=args.mode,
        placement=args.placement,
        partition_impl=args.partition_impl,
        trace=args.trace,
        fixture=args.fixture,
    )
    try:
        summary = run_program(cfg)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    print("\n".join(summary.lines()))
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
