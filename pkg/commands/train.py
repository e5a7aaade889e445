#!/usr/bin/env python3
"""
Model Training Command

Builds Alpha360 panels from a bar store, trains the topic/expectation model on
the train range, selects the epoch with the best validation IC and writes the
checkpoint plus the per-epoch training record.

Usage:
    python train.py --store tmp/store --train-range 2020-03-25:2020-09-30 \\
        --valid-range 2020-10-01:2020-11-30 --epochs 20
    python train.py --store tmp/store --config run.cfg --seed 3
"""

import argparse
import os
import sys
from pathlib import Path

# Add parent directory to path to import libs
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from libs.artifacts import RunManifest, output_lock
from libs.config import (Constants, DataConfig, TrainingConfig, config_snapshot, load_config_file,
                         resolve_config)
from libs.errors import ConfigurationError
from libs.logging import setup_logging
from libs.market_data import build_panels, load_store, split_dataset
from libs.training import Trainer
from libs.utils import add_global_arguments, print_success, resolve_out_dir, run_command


def add_data_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags mirroring ``DataConfig``; shared with ``predict``."""
    parser.add_argument('--train-range', help='Inclusive training dates START:END')
    parser.add_argument('--valid-range', help='Inclusive validation dates START:END')
    parser.add_argument('--test-range', help='Inclusive test dates START:END')
    parser.add_argument('--normalize-features', action=argparse.BooleanOptionalAction, default=None,
                        help='Normalize features by the current close and volume (default: on)')
    parser.add_argument('--standardize-features', action=argparse.BooleanOptionalAction, default=None,
                        help='Z-score each feature across the stocks of a date (default: on)')
    parser.add_argument('--standardize-labels', action=argparse.BooleanOptionalAction, default=None,
                        help='Standardize labels per date (default: off)')


def data_overrides(args: argparse.Namespace) -> dict:
    return {
        'train_range': args.train_range,
        'valid_range': args.valid_range,
        'test_range': args.test_range,
        'normalize_features': args.normalize_features,
        'standardize_features': args.standardize_features,
        'standardize_labels': args.standardize_labels,
    }


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--store', type=Path, required=True, help='Bar store directory written by ingest')
    parser.add_argument('--epochs', type=int, help='Training epochs (default: 300)')
    parser.add_argument('--learning-rate', type=float, help='Adam learning rate (default: 0.001)')
    parser.add_argument('--dropout', type=float, help='Dropout before the heads (default: 0.1)')
    parser.add_argument('--embedding-size', type=int, help='Embedding size d (default: 128)')
    parser.add_argument('--bptt-window', type=int, help='Days per truncated backpropagation window (default: 60)')
    parser.add_argument('--topics-reinit-daily', action=argparse.BooleanOptionalAction, default=None,
                        help='Re-initialize topics from the day\'s embeddings every day')
    parser.add_argument('--separate-head-weights', action=argparse.BooleanOptionalAction, default=None,
                        help='Use one combiner weight per head instead of a shared one')
    parser.add_argument('--plain-lstm', action=argparse.BooleanOptionalAction, default=None,
                        help='Baseline: stock head only, no topics or expectations')
    add_data_arguments(parser)
    add_global_arguments(parser)


def run(args: argparse.Namespace) -> int:
    out_dir = resolve_out_dir(args, 'train')
    file_values = load_config_file(args.config)
    training_config = resolve_config(TrainingConfig, file_values, {
        'epochs': args.epochs,
        'learning_rate': args.learning_rate,
        'dropout': args.dropout,
        'embedding_size': args.embedding_size,
        'bptt_window': args.bptt_window,
        'topics_reinit_daily': args.topics_reinit_daily,
        'separate_head_weights': args.separate_head_weights,
        'plain_lstm': args.plain_lstm,
        'seed': args.seed,
    })
    data_config = resolve_config(DataConfig, file_values, data_overrides(args))
    if data_config.train_range is None:
        raise ConfigurationError("train_range is required (--train-range or config file)")

    with output_lock(out_dir):
        log = setup_logging(out_dir / Constants.LOG_FILE)
        log.log_config('TrainingConfig', training_config.model_dump(mode='json'))
        log.log_config('DataConfig', data_config.model_dump(mode='json'))
        manifest = RunManifest('train', seed=training_config.seed,
                               config=config_snapshot([training_config, data_config]))

        artifacts = load_store(args.store)
        manifest.inputs.update(artifacts.digests)

        panels = build_panels(artifacts.store, artifacts.universe, data_config)
        train_panels, valid_panels, _ = split_dataset(panels, data_config.train_range, data_config.valid_range,
                                                      data_config.test_range)
        if not train_panels:
            raise ConfigurationError(f"No feature panels fall inside train_range "
                                     f"{data_config.train_range[0]}:{data_config.train_range[1]}")
        log.log_info(f"Training on {len(train_panels)} days, validating on {len(valid_panels)} days")

        checkpoint_path = out_dir / Constants.CHECKPOINT_FILE
        trainer = Trainer(training_config)
        _, record = trainer.fit(train_panels, valid_panels, checkpoint_path=checkpoint_path,
                                calendar=artifacts.store.calendar)

        manifest.add_output(checkpoint_path, out_dir)
        manifest.add_output(record.to_csv(out_dir / Constants.TRAINING_RECORD_FILE), out_dir)
        manifest.write(out_dir)

    print_success(f"Best epoch {record.best_epoch}; checkpoint written to {checkpoint_path}")
    return Constants.EXIT_OK


def main():
    parser = argparse.ArgumentParser(description="Train the topic/expectation return model")
    add_arguments(parser)
    sys.exit(run_command(run, parser.parse_args()))


if __name__ == "__main__":
    main()
