"""
Command-line entry point.

    train     --config <path> [--output-dir <dir>]
    eval      --ckpt <path> --data <iris|mnist>
    gradcheck [--seed N] [--sizes BxNxM]
    inspect   --ckpt <path> --layer i --neuron j --min a --max b --points n [--out <dir>]
    compare   --a <cfg> --b <cfg> [--output-dir <dir>]

Exit codes: 0 success, 1 configuration error, 2 data / checkpoint error,
3 numerical failure or failed gradient audit.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional, Tuple

from src import controller
from src.services.export_service import format_table
from src.errors import ConfigError, DataError, NumericalError
from src.logging_setup import setup_logging

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def parse_sizes(text: str) -> Tuple[int, int, int]:
    try:
        parts = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        parts = ()
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"sizes must look like BxNxM with positive integers, got '{text}'")
    return parts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ugmm-nn", description="uGMM-NN training and inspection")
    parser.add_argument("--log-level", default=None, help="overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one run configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on its test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, choices=["iris", "mnist"])

    p = sub.add_parser("gradcheck", help="finite-difference gradient audits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sizes", type=parse_sizes, default=None, help="BxNxM")

    p = sub.add_parser("inspect", help="export one neuron's mixture density")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--neuron", type=int, required=True)
    p.add_argument("--min", dest="grid_min", type=float, required=True)
    p.add_argument("--max", dest="grid_max", type=float, required=True)
    p.add_argument("--points", type=int, default=1001)
    p.add_argument("--out", default=None)

    p = sub.add_parser("compare", help="train two configurations and tabulate them")
    p.add_argument("--a", dest="config_a", required=True)
    p.add_argument("--b", dest="config_b", required=True)
    p.add_argument("--output-dir", default=None)
    return parser


def cmd_train(args: argparse.Namespace) -> int:
    outcome = controller.train_from_file(args.config, args.output_dir)
    print(f"report={outcome.report_path}")
    print(f"checkpoint={outcome.checkpoint_path}")
    print(f"test_accuracy={outcome.accuracy!r}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    accuracy = controller.evaluate_checkpoint(args.ckpt, args.data)
    print(f"test_accuracy={accuracy!r}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = controller.gradcheck(args.seed, args.sizes)
    for r in results:
        verdict = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<14} {verdict} instances={r.instances} max_rel_error={r.max_rel_error:.3e} max_abs_error={r.max_abs_error:.3e}")
    worst = max(r.max_rel_error for r in results)
    passed = all(r.passed for r in results)
    print(f"{'PASS' if passed else 'FAIL'} max_rel_error={worst:.3e}")
    return EXIT_OK if passed else EXIT_NUMERICAL


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        written = controller.inspect_neuron(
            args.ckpt, args.layer, args.neuron, args.grid_min, args.grid_max, args.points, args.out
        )
    except (IndexError, ValueError) as e:
        if isinstance(e, DataError):
            raise
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(f"wrote={path}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    table = controller.compare_configs(args.config_a, args.config_b, args.output_dir)
    print(format_table(table))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "inspect": cmd_inspect,
    "compare": cmd_compare,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        log.error(f"Configuration error: {e}")
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        log.error(f"Data error: {e}")
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        log.error(f"Numerical failure: {e}")
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
