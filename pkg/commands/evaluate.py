#!/usr/bin/env python3
"""
Evaluation Command

Scores a predictions file against the realized next-day returns of the bar
store: daily IC and rank IC, their means, ICIR and Rank ICIR.

Usage:
    python evaluate.py --predictions tmp/predict --store tmp/store
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
from libs.evaluation import evaluate, realized_returns
from libs.logging import setup_logging
from libs.market_data import load_store
from libs.training import predictions_from_frame
from libs.utils import add_global_arguments, print_success, print_table, resolve_out_dir, run_command


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--predictions', type=Path, required=True, help='Prediction output directory')
    parser.add_argument('--store', type=Path, required=True, help='Bar store directory written by ingest')
    add_global_arguments(parser)


def load_predictions(predictions_dir: Path):
    """Read a verified predictions file; returns the vectors and the file digest."""
    path = predictions_dir / Constants.PREDICTIONS_FILE
    digest = verify_artifact(path, load_manifest(predictions_dir))
    frame = pd.read_csv(path, dtype={'stock_id': str, 'date': str}, float_precision='round_trip')
    return predictions_from_frame(frame), digest


def run(args: argparse.Namespace) -> int:
    out_dir = resolve_out_dir(args, 'evaluate')

    with output_lock(out_dir):
        log = setup_logging(out_dir / Constants.LOG_FILE)
        manifest = RunManifest('evaluate', seed=args.seed)
        predictions, digest = load_predictions(args.predictions)
        manifest.inputs[Constants.PREDICTIONS_FILE] = digest
        artifacts = load_store(args.store)
        manifest.inputs.update(artifacts.digests)

        # Returns of the last trading day are not realized yet
        last_day = artifacts.store.calendar[-1]
        if predictions and predictions[-1].date == last_day:
            log.log_warning(f"Skipping predictions for {last_day}: no next trading day in the store")
            predictions = predictions[:-1]

        labels = realized_returns(artifacts.store, [p.date for p in predictions])
        report = evaluate(predictions, labels)
        metrics_path = out_dir / Constants.METRICS_FILE
        daily_path = out_dir / Constants.DAILY_IC_FILE
        report.write(metrics_path, daily_path)
        manifest.add_output(metrics_path, out_dir)
        manifest.add_output(daily_path, out_dir)
        manifest.write(out_dir)

    print_table('Prediction metrics', report.to_frame().to_dict('records'))
    print_success(f"Evaluated {report.days_used} day(s); metrics written to {metrics_path}")
    return Constants.EXIT_OK


def main():
    parser = argparse.ArgumentParser(description="Compute IC, ICIR, Rank IC and Rank ICIR of predictions")
    add_arguments(parser)
    sys.exit(run_command(run, parser.parse_args()))


if __name__ == "__main__":
    main()
