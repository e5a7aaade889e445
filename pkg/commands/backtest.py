#!/usr/bin/env python3
"""
Backtest Command

Runs the top-k dropout simulation on a predictions file and reports the
annualized return, max drawdown and information ratio against a benchmark.

Usage:
    python backtest.py --predictions tmp/predict --store tmp/store --topk 10 --n-drop 2
    python backtest.py --predictions tmp/predict --store tmp/store \\
        --benchmark index --benchmark-path csi300.csv
"""

import argparse
import os
import sys
from pathlib import Path

# Add parent directory to path to import libs
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from commands.evaluate import load_predictions
from libs.artifacts import RunManifest, output_lock
from libs.backtest import build_benchmark, compute_report, run_topk_dropout
from libs.config import BacktestConfig, Constants, config_snapshot, load_config_file, resolve_config
from libs.logging import setup_logging
from libs.market_data import load_store
from libs.utils import add_global_arguments, print_success, print_table, resolve_out_dir, run_command


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--predictions', type=Path, required=True, help='Prediction output directory')
    parser.add_argument('--store', type=Path, required=True, help='Bar store directory written by ingest')
    parser.add_argument('--topk', type=int, help='Stocks held (default: 50)')
    parser.add_argument('--n-drop', type=int, help='Stocks rotated per day (default: 5)')
    parser.add_argument('--transaction-cost-rate', type=float, help='Per-side cost fraction (default: 0)')
    parser.add_argument('--initial-cash', type=float, help='Starting cash (default: 1.0)')
    parser.add_argument('--trading-days-per-year', type=int, help='Annualization factor (default: 252)')
    parser.add_argument('--benchmark', choices=['equal_weight', 'index'], help='Benchmark (default: equal_weight)')
    parser.add_argument('--benchmark-path', type=Path, help='Index CSV date,close for --benchmark index')
    add_global_arguments(parser)


def run(args: argparse.Namespace) -> int:
    out_dir = resolve_out_dir(args, 'backtest')
    config = resolve_config(BacktestConfig, load_config_file(args.config), {
        'topk': args.topk,
        'n_drop': args.n_drop,
        'transaction_cost_rate': args.transaction_cost_rate,
        'initial_cash': args.initial_cash,
        'trading_days_per_year': args.trading_days_per_year,
        'benchmark': args.benchmark,
        'benchmark_path': args.benchmark_path,
    })

    with output_lock(out_dir):
        log = setup_logging(out_dir / Constants.LOG_FILE)
        log.log_config('BacktestConfig', config.model_dump(mode='json'))
        manifest = RunManifest('backtest', seed=args.seed, config=config_snapshot([config]))
        predictions, digest = load_predictions(args.predictions)
        manifest.inputs[Constants.PREDICTIONS_FILE] = digest
        artifacts = load_store(args.store)
        manifest.inputs.update(artifacts.digests)
        if config.benchmark_path is not None:
            manifest.add_input('benchmark', config.benchmark_path)

        ledger = run_topk_dropout(predictions, artifacts.store, config)
        benchmark = build_benchmark(artifacts.store, ledger.dates, config)
        report = compute_report(ledger, benchmark, config)

        ledger_path = ledger.to_csv(out_dir / Constants.LEDGER_FILE)
        report_path = out_dir / Constants.BACKTEST_REPORT_FILE
        curves_path = out_dir / Constants.CURVES_FILE
        report.write(report_path, curves_path)
        for path in (ledger_path, report_path, curves_path):
            manifest.add_output(path, out_dir)
        manifest.write(out_dir)

    print_table('Backtest', report.to_frame().to_dict('records'))
    print_success(f"Simulated {len(ledger.dates)} day(s) with {len(ledger.trades())} trade(s); "
                  f"report written to {report_path}")
    return Constants.EXIT_OK


def main():
    parser = argparse.ArgumentParser(description="Simulate the top-k dropout strategy on predictions")
    add_arguments(parser)
    sys.exit(run_command(run, parser.parse_args()))


if __name__ == "__main__":
    main()
