"""Command-line entry point: qdelta <kind> --config <path> [options]."""

import argparse
import sys

from .oracle import NonConvergenceError
from .runner import (EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, KINDS,
                     ConfigError, load_config, run)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdelta",
        description="Run multi-timescale value-decomposition experiments.")
    parser.add_argument("kind", choices=KINDS,
                        help="experiment kind to run")
    parser.add_argument("--config", required=True,
                        help="path to a JSON experiment config")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides the config)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: QDELTA_WORKERS or 1)")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (overrides the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config-error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.kind != args.kind:
        print(f"config-error: kind: config says {cfg.kind!r}, "
              f"command line says {args.kind!r}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.master_seed = args.seed
    try:
        csv_path, manifest_path = run(cfg, out_dir=args.out,
                                      workers=args.workers)
    except NonConvergenceError as exc:
        print(f"numeric-error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io-error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(csv_path)
    print(manifest_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
