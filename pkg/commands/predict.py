#!/usr/bin/env python3
"""
Prediction Command

Loads a trained checkpoint, warms the recurrent state up through the panels
from the start of the training range, and writes next-day return predictions
for every panel in the prediction range.

Usage:
    python predict.py --model tmp/train --store tmp/store --range 2020-12-01:2020-12-31
    python predict.py --model tmp/train --store tmp/store   # uses the test range
"""

import argparse
import os
import sys
from pathlib import Path

# Add parent directory to path to import libs
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from commands.train import add_data_arguments, data_overrides
from libs.artifacts import RunManifest, load_manifest, output_lock, verify_artifact
from libs.checkpoint import load_checkpoint
from libs.config import Constants, DataConfig, config_snapshot, load_config_file, parse_date_range, resolve_config
from libs.errors import ConfigurationError
from libs.logging import setup_logging
from libs.market_data import build_panels, load_store
from libs.training import predict, predictions_frame
from libs.utils import add_global_arguments, print_success, resolve_out_dir, run_command, write_csv


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--model', type=Path, required=True, help='Training output directory holding the checkpoint')
    parser.add_argument('--store', type=Path, required=True, help='Bar store directory written by ingest')
    parser.add_argument('--range', dest='predict_range',
                        help='Inclusive prediction dates START:END (default: the test range)')
    add_data_arguments(parser)
    add_global_arguments(parser)


def run(args: argparse.Namespace) -> int:
    out_dir = resolve_out_dir(args, 'predict')
    model_manifest = load_manifest(args.model)
    checkpoint_path = args.model / Constants.CHECKPOINT_FILE

    # Data settings default to the ones the model was trained with
    base = {k: v for k, v in model_manifest.get('config', {}).items() if k in DataConfig.model_fields}
    base.update(load_config_file(args.config))
    data_config = resolve_config(DataConfig, base, data_overrides(args))
    try:
        predict_range = parse_date_range(args.predict_range) or data_config.test_range
    except ValueError as e:
        raise ConfigurationError(str(e)) from e
    if predict_range is None:
        raise ConfigurationError("No prediction range: pass --range or set test_range")

    with output_lock(out_dir):
        log = setup_logging(out_dir / Constants.LOG_FILE)
        manifest = RunManifest('predict', seed=model_manifest.get('seed'), config=config_snapshot([data_config]))
        manifest.config['predict_range'] = f"{predict_range[0].isoformat()}:{predict_range[1].isoformat()}"
        manifest.inputs[Constants.CHECKPOINT_FILE] = verify_artifact(checkpoint_path, model_manifest)

        artifacts = load_store(args.store)
        manifest.inputs.update(artifacts.digests)
        model, header = load_checkpoint(checkpoint_path)
        log.log_info(f"Loaded checkpoint: d={header.d}, trained on {header.n} stocks, seed {header.seed}")

        panels = build_panels(artifacts.store, artifacts.universe, data_config)
        start, end = predict_range
        targets = [p for p in panels if start <= p.date <= end]
        if not targets:
            raise ConfigurationError(f"No feature panels fall inside {start}:{end}")
        warm_start = data_config.train_range[0] if data_config.train_range else start
        warmup = [p for p in panels if warm_start <= p.date < start]

        predictions = predict(model, targets, warmup=warmup, calendar=artifacts.store.calendar)
        path = write_csv(predictions_frame(predictions), out_dir / Constants.PREDICTIONS_FILE)
        manifest.add_output(path, out_dir)
        manifest.write(out_dir)

    print_success(f"Wrote predictions for {len(predictions)} day(s) to {path}")
    return Constants.EXIT_OK


def main():
    parser = argparse.ArgumentParser(description="Predict next-day returns with a trained checkpoint")
    add_arguments(parser)
    sys.exit(run_command(run, parser.parse_args()))


if __name__ == "__main__":
    main()
