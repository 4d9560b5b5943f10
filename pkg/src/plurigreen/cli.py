"""Command-line entry point: ``plurigreen <command> --config <path> [--out <dir>] [--seed <u64>]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import parse_config
from .errors import ConfigError
from .runner import EXIT_CONFIG, run

COMMANDS = ("green", "torus", "ray", "blowup", "verify")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plurigreen",
                                description="Pluricomplex Green's functions and related Monge-Ampere pipelines.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--seed", type=_u64, default=None, help="seed for randomized suites (u64)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(logging.INFO if args.verbose else logging.WARNING)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    logger = logging.getLogger("plurigreen")
    logger.addHandler(handler)
    try:
        return _main(args)
    finally:
        logger.removeHandler(handler)


def _main(args) -> int:
    try:
        with open(args.config, "rb") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"plurigreen: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"plurigreen: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.command != args.command:
        print(f"plurigreen: config is for {cfg.command!r}, not {args.command!r}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
