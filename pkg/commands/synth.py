#!/usr/bin/env python3
"""
Synthetic Bar Generator Command

Writes geometric random-walk bars with an optional planted signal. The output
is a valid input for ``ingest``; equal seeds give byte-identical files.

Usage:
    python synth.py --stocks 20 --days 300 --seed 7
    python synth.py --stocks 20 --days 300 --signal-strength 0
"""

import argparse
import os
import sys
from datetime import date

# Add parent directory to path to import libs
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from libs.artifacts import RunManifest, output_lock
from libs.config import Constants
from libs.logging import setup_logging
from libs.synthetic import PlantedSignal, generate_bars
from libs.utils import add_global_arguments, print_success, resolve_out_dir, run_command, write_csv


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--stocks', type=int, default=20, help='Number of stocks (default: 20)')
    parser.add_argument('--days', type=int, default=300, help='Number of trading days, at least 61 (default: 300)')
    parser.add_argument('--signal-strength', type=float, default=1.0,
                        help='Weight of the planted signal in next-day returns (default: 1.0)')
    parser.add_argument('--noise', type=float, default=0.01, help='Std of the return noise (default: 0.01)')
    parser.add_argument('--signal-scale', type=float, default=0.02, help='Std of the planted signal (default: 0.02)')
    parser.add_argument('--start', type=date.fromisoformat, default=date(2020, 1, 1),
                        help='First calendar date (default: 2020-01-01)')
    add_global_arguments(parser)


def run(args: argparse.Namespace) -> int:
    out_dir = resolve_out_dir(args, 'synth')
    seed = args.seed if args.seed is not None else 0
    signal = PlantedSignal(strength=args.signal_strength, noise=args.noise, signal_scale=args.signal_scale)

    with output_lock(out_dir):
        setup_logging(out_dir / Constants.LOG_FILE)
        bars = generate_bars(args.stocks, args.days, seed=seed, signal=signal, start=args.start)
        manifest = RunManifest('synth', seed=seed, config={
            'stocks': args.stocks,
            'days': args.days,
            'signal_strength': signal.strength,
            'noise': signal.noise,
            'signal_scale': signal.signal_scale,
            'start': args.start.isoformat(),
        })
        manifest.add_output(write_csv(bars, out_dir / Constants.BARS_FILE), out_dir)
        manifest.write(out_dir)

    print_success(f"Wrote {len(bars)} synthetic bars to {out_dir / Constants.BARS_FILE}")
    return Constants.EXIT_OK


def main():
    parser = argparse.ArgumentParser(description="Generate synthetic daily bars with a planted signal")
    add_arguments(parser)
    sys.exit(run_command(run, parser.parse_args()))


if __name__ == "__main__":
    main()
