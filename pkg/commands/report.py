#!/usr/bin/env python3
"""
Report Command

Merges the evaluation metrics and the backtest report into one CSV bundle
and copies the dated series (daily IC, equity and benchmark curves) next to
it for plotting.

Usage:
    python report.py --evaluation tmp/evaluate --backtest tmp/backtest
"""

import argparse
import os
import sys
from pathlib import Path

import pandas as pd

# Add parent directory to path to import libs
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from libs.artifacts import RunManifest, load_manifest, output_lock, verify_artifact
from libs.config import Constants
from libs.logging import setup_logging
from libs.utils import add_global_arguments, print_success, print_table, resolve_out_dir, run_command, write_csv


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--evaluation', type=Path, required=True, help='Evaluation output directory')
    parser.add_argument('--backtest', type=Path, required=True, help='Backtest output directory')
    add_global_arguments(parser)


def _read_verified(directory: Path, names, manifest: RunManifest) -> dict:
    upstream = load_manifest(directory)
    frames = {}
    for name in names:
        path = directory / name
        manifest.inputs[f"{directory.name}/{name}"] = verify_artifact(path, upstream)
        frames[name] = pd.read_csv(path, dtype={'date': str}, float_precision='round_trip')
    return frames


def run(args: argparse.Namespace) -> int:
    out_dir = resolve_out_dir(args, 'report')

    with output_lock(out_dir):
        setup_logging(out_dir / Constants.LOG_FILE)
        manifest = RunManifest('report', seed=args.seed)
        evaluation = _read_verified(args.evaluation, (Constants.METRICS_FILE, Constants.DAILY_IC_FILE), manifest)
        backtest = _read_verified(args.backtest, (Constants.BACKTEST_REPORT_FILE, Constants.CURVES_FILE), manifest)

        summary = pd.concat([
            evaluation[Constants.METRICS_FILE].assign(section='prediction'),
            backtest[Constants.BACKTEST_REPORT_FILE].assign(section='backtest'),
        ], ignore_index=True)[['section', 'metric', 'value']]

        outputs = [
            write_csv(summary, out_dir / Constants.REPORT_FILE),
            write_csv(evaluation[Constants.DAILY_IC_FILE], out_dir / Constants.DAILY_IC_FILE),
            write_csv(backtest[Constants.CURVES_FILE], out_dir / Constants.CURVES_FILE),
        ]
        for path in outputs:
            manifest.add_output(path, out_dir)
        manifest.write(out_dir)

    print_table('Report', summary.to_dict('records'))
    print_success(f"Report written to {out_dir / Constants.REPORT_FILE}")
    return Constants.EXIT_OK


def main():
    parser = argparse.ArgumentParser(description="Merge evaluation and backtest results into one report")
    add_arguments(parser)
    sys.exit(run_command(run, parser.parse_args()))


if __name__ == "__main__":
    main()
