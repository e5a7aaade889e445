#!/usr/bin/env python3
"""
Bar Ingestion Command

Validates a raw bar CSV, writes the bar store (bars.csv, universe.csv and a
manifest) and optionally exports one Alpha360 feature panel per trading date.

Usage:
    python ingest.py bars.csv --out tmp/store
    python ingest.py bars.csv --universe universe.csv --skip-bad-rows
    python ingest.py bars.csv --export-panels
"""

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

# Add parent directory to path to import libs
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from libs.artifacts import RunManifest, output_lock
from libs.config import Constants, DataConfig, config_snapshot, load_config_file, resolve_config
from libs.errors import UsageError
from libs.logging import setup_logging
from libs.market_data import Universe, build_panels, ingest_bars
from libs.utils import add_global_arguments, print_success, print_warning, resolve_out_dir, run_command


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('bars', type=Path, help='Bar CSV: stock_id,date,open,high,low,close,vwap,volume')
    parser.add_argument('--universe', type=Path, help='Universe CSV: date,stock_id (default: every stock with a bar)')
    parser.add_argument('--skip-bad-rows', action='store_true',
                        help='Drop malformed and duplicate rows instead of failing; rejects go to the manifest')
    parser.add_argument('--export-panels', action='store_true',
                        help=f'Also write one feature panel CSV per date under {Constants.PANELS_DIR}/')
    parser.add_argument('--normalize-features', action=argparse.BooleanOptionalAction, default=None,
                        help='Normalize exported panels by the current close and volume (default: on)')
    parser.add_argument('--standardize-features', action=argparse.BooleanOptionalAction, default=None,
                        help='Z-score exported features across the stocks of a date (default: on)')
    parser.add_argument('--standardize-labels', action=argparse.BooleanOptionalAction, default=None,
                        help='Standardize exported labels per date (default: off)')
    add_global_arguments(parser)


def run(args: argparse.Namespace) -> int:
    if not args.bars.exists():
        raise UsageError(f"Bar file not found: {args.bars}")
    out_dir = resolve_out_dir(args, 'store')
    data_config = resolve_config(DataConfig, load_config_file(args.config), {
        'normalize_features': args.normalize_features,
        'standardize_features': args.standardize_features,
        'standardize_labels': args.standardize_labels,
    })

    with output_lock(out_dir):
        log = setup_logging(out_dir / Constants.LOG_FILE)
        log.log_config('DataConfig', data_config.model_dump(mode='json'))
        manifest = RunManifest('ingest', seed=args.seed, config=config_snapshot([data_config]))
        manifest.add_input('bars', args.bars)

        result = ingest_bars(args.bars, skip_bad_rows=args.skip_bad_rows)
        if args.universe:
            manifest.add_input('universe', args.universe)
            universe = Universe.from_csv(args.universe)
        else:
            universe = Universe.from_bars(result.store)

        manifest.add_output(result.store.to_csv(out_dir / Constants.BARS_FILE), out_dir)
        manifest.add_output(universe.to_csv(out_dir / Constants.UNIVERSE_FILE), out_dir)

        if args.export_panels:
            panels_dir = out_dir / Constants.PANELS_DIR
            for panel in build_panels(result.store, universe, data_config):
                manifest.add_output(panel.to_csv(panels_dir / f"{panel.date.isoformat()}.csv"), out_dir)

        manifest.rejected_rows = [asdict(r) for r in result.rejected]
        manifest.write(out_dir)

    if result.rejected:
        print_warning(f"Rejected {len(result.rejected)} row(s); see {out_dir / Constants.MANIFEST_FILE}")
    print_success(f"Ingested {len(result.store)} bars for {len(result.store.stock_ids)} stocks "
                  f"over {len(result.store.calendar)} days into {out_dir}")
    log.log_success(f"ingest complete: {out_dir}")
    return Constants.EXIT_OK


def main():
    parser = argparse.ArgumentParser(
        description="Validate raw daily bars and write a bar store",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    add_arguments(parser)
    sys.exit(run_command(run, parser.parse_args()))


if __name__ == "__main__":
    main()
