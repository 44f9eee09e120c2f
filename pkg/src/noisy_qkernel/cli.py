"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiment
from .config import ExperimentConfig, load_config, with_overrides
from .errors import ConfigError, DataError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

COMMANDS = {
    "data": experiment.cmd_data,
    "kernel": experiment.cmd_kernel,
    "sweep": experiment.cmd_sweep,
    "bounds": experiment.cmd_bounds,
    "regions": experiment.cmd_regions,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisy-qkernel",
        description="Noisy quantum fidelity kernels: simulation, ridge fits and concentration bounds.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON experiment config (defaults reproduce the N=10 sweep)")
    parser.add_argument("--seed", type=int, help="override the config seed (u64)")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    return with_overrides(cfg, seed=args.seed, output_dir=args.out, threads=args.threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError) as exc:
        where = f" (L={exc.sweep_L})" if hasattr(exc, "sweep_L") else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
