"""Command line entry point.

Exit codes: 0 success, 1 assertion failure, 2 invalid config, 3 numerical
guard (boundary or convergence) tripped.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .core import NumericalGuardError
from .scenario import (
    EXIT_CONFIG,
    EXIT_GUARD,
    ConfigError,
    Scenario,
    format_verdict_table,
    run_analytic,
    run_classify,
    run_compare,
    run_evolve,
    run_sweep,
)

log = logging.getLogger("pointer_states")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointer-states",
        description="Spin-1/2 system-apparatus measurement model: analytic flows vs spectral propagation.",
    )
    parser.add_argument("command", choices=["analytic", "evolve", "compare", "sweep", "classify"])
    parser.add_argument("--config", help="scenario JSON file (defaults are used when omitted)")
    parser.add_argument("--out", help="output directory (overrides outputs.dir)")
    parser.add_argument("--tolerance", type=float, help="residual tolerance for compare")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for sweep")
    parser.add_argument("--seed", type=int, default=None, help="accepted for interface stability; unused")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        sc = Scenario.load(args.config, args.out)
        if args.tolerance is not None:
            sc = sc.with_tolerance(args.tolerance)
        if args.command == "analytic":
            result = run_analytic(sc)
        elif args.command == "evolve":
            result = run_evolve(sc)
        elif args.command == "compare":
            result = run_compare(sc)
        elif args.command == "sweep":
            result = run_sweep(sc, args.threads)
        else:
            result = run_classify(sc)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalGuardError as exc:
        print(f"numerical guard tripped: {exc}", file=sys.stderr)
        return EXIT_GUARD
    if args.command == "classify":
        print(format_verdict_table(result.summary))
    elif args.command == "compare":
        print(f"max |analytic - numeric| = {result.summary['max_abs_residual']:.3e} "
              f"(tolerance {sc.tolerance:g})")
    for failure in result.summary.get("failures", []):
        print(f"FAIL {failure}", file=sys.stderr)
    print(("PASS" if result.exit_code == 0 else "FAIL") + f" {args.command} -> {sc.out_dir}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
