"""Command-line entry point: ``wvq <experiment> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, ReportWriteError, WVQError
from .config import COMMANDS, load_config
from .experiments import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wvq", description="Codebook distribution-matching experiments.")
    p.add_argument("experiment", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file (defaults used when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=_seed, help="base seed, overrides the config")
    p.add_argument("--full-scale", action="store_true",
                   help="atomic: use the full-size trainer configuration")
    p.add_argument("--workers", type=int, help="worker processes for sweep points")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, COMMANDS[args.experiment], output_dir=args.out,
                          seed=args.seed, full_scale=args.full_scale)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.workers = args.workers
    except ConfigError as exc:
        print(f"wvq: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = run_experiment(cfg)
    except ReportWriteError as exc:
        print(f"wvq: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    except WVQError as exc:
        print(f"wvq: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        if "table" in out.extras:
            print(out.extras["table"], end="")
        print(f"wrote {len(out.rows)} rows to {cfg.output_dir / 'results.csv'}")
    if out.diverged:
        print(f"wvq: {len(out.diverged)} run(s) diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
