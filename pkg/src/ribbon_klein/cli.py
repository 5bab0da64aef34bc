"""Command line entry point: ``ribbon-klein run`` and ``ribbon-klein validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .errors import ConfigError
from .sweep import SWEEP_KINDS, read_config, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ribbon-klein", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep and write CSV files")
    run.add_argument("--config", required=True, help="key = value configuration file")
    run.add_argument("--sweep", required=True, choices=SWEEP_KINDS)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument(
        "--values",
        type=_values,
        default=None,
        help="comma-separated sweep values: degrees (angle), multiples of a0 (length) or eV (broadening)",
    )
    run.add_argument("--workers", type=int, default=None, help="override the config's worker count (0 = all cores)")

    validate = sub.add_parser("validate", help="parse and check a configuration file")
    validate.add_argument("--config", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        config = read_config(args.config)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(f"{args.config}: ok")
        return EXIT_OK

    try:
        result = run_sweep(config, args.sweep, args.out, values=args.values, workers=args.workers)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in result.files:
        print(path)
    if result.failed:
        failures = sum(len(p.errors) for p in result.points)
        print(f"error: {failures} energy point(s) failed; see rows marked 'error'", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
