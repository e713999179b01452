#!/usr/bin/env python3
"""
biorhythm_cli.py
----------------

Command-line entry point.

Commands:
  simulate   - draw a synthetic cohort from a [cohort]/[effect] spec file
  analyze    - run every metric over a cohort CSV and write the report bundle
  nullmodel  - write the random-day null summaries only

Usage:
  python biorhythm_cli.py simulate --config sim.cfg --out cohort.csv --seed 3
  python biorhythm_cli.py analyze --config run.cfg --out report/ --pair-budget 2000
  python biorhythm_cli.py nullmodel --config run.cfg --null-days 100

Exit codes: 0 success, 2 configuration error, 3 data error, 4 metric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from analysis_builder import AnalysisBuilder, AnalysisOutputs, RunConfig
from cohort_simulator import export_cohort, generate_cohort
from error_handling import (
    EXIT_CONFIG_ERROR, EXIT_DATA_ERROR, EXIT_METRIC_FAILURE, EXIT_OK,
    BiorhythmError, ConfigError, DomainError, IngestionError, UnknownUserError,
    set_library_log_level,
)
from keyvalue_config import load_simulation_spec
from spike_sync import PAPER, STANDARD


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="biorhythm",
        description="Volume, synchronicity and rhythm metrics of population biorhythms around events.",
    )
    parser.add_argument("--verbose", action="store_true", help="Log library details (DEBUG)")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Generate a synthetic cohort CSV")
    sim.add_argument("--config", required=True, help="Simulation spec file ([cohort], [effect] blocks)")
    sim.add_argument("--out", required=True, help="Output CSV path")
    sim.add_argument("--seed", type=int, default=None, help="Override the cohort seed")

    for name, text in (("analyze", "Compute every metric and write the report bundle"),
                       ("nullmodel", "Compute the random-day null summaries")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="Run file ([run], [event] blocks)")
        cmd.add_argument("--out", default=None, help="Output directory (overrides [run] out)")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--pair-budget", type=int, default=None,
                         help="Sample at most this many user pairs per window")
        cmd.add_argument("--alpha-days", type=int, default=None, help="Days before/after each event")
        cmd.add_argument("--rhythm-window-days", type=int, default=None)
        cmd.add_argument("--spike-variant", choices=[PAPER, STANDARD], default=None)
        cmd.add_argument("--null-days", type=int, default=None, help="Random days per null model")
    return parser.parse_args(argv)


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig.from_file(args.config).with_overrides(
        seed=args.seed,
        output_dir=args.out,
        pair_budget=args.pair_budget,
        alpha_days=args.alpha_days,
        rhythm_window_days=args.rhythm_window_days,
        spike_variant=args.spike_variant,
        null_days=args.null_days,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    spec, effects = load_simulation_spec(args.config, seed=args.seed)
    cohort = generate_cohort(spec, effects)
    path = export_cohort(cohort, Path(args.out))
    print(f"✅ Simulated {cohort.n_users} user(s) x {cohort.n_days} day(s) "
          f"({cohort.start_date}..{cohort.end_date}), {len(effects)} effect(s), seed={spec.seed} -> {path}")
    return EXIT_OK


def _report(out: AnalysisOutputs) -> int:
    if out.failed:
        for message in out.errors:
            print(f"⚠️  {message}", file=sys.stderr)
        return EXIT_METRIC_FAILURE
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    return _report(AnalysisBuilder(_run_config(args)).build())


def cmd_nullmodel(args: argparse.Namespace) -> int:
    return _report(AnalysisBuilder(_run_config(args)).build_nulls())


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "nullmodel": cmd_nullmodel}


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    if args.verbose:
        set_library_log_level(logging.DEBUG)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (IngestionError, UnknownUserError, DomainError, FileNotFoundError) as e:
        print(f"❌ Data error: {e}", file=sys.stderr)
        return EXIT_DATA_ERROR
    except BiorhythmError as e:
        print(f"❌ Metric failure: {e}", file=sys.stderr)
        return EXIT_METRIC_FAILURE


if __name__ == "__main__":
    sys.exit(main())
