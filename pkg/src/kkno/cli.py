"""Command line entry point: ``kkno run <config.json> [--out DIR] [--threads N] [--plot]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments.runner import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kkno", description="Kantorovich-kernel operator experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the experiment described by a JSON config")
    p.add_argument("config", help="path to the JSON config")
    p.add_argument("--out", help="output directory (overrides $KKNO_OUTPUT_DIR and the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--plot", action="store_true", help="also write plot.svg")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return run(args.config, args.out, args.threads, args.plot)


if __name__ == "__main__":
    sys.exit(main())
