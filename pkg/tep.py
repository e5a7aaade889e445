#!/usr/bin/env python3
"""
Topic/Expectation Pipeline (TEP) - Unified Command Entrypoint

This is the main entrypoint of the pipeline. It wires every stage of the
workflow behind a single command-line tool.

Usage:
    python tep.py <command> [command-options]

Available Commands:
    ingest      Validate raw bars and write a bar store
    synth       Generate synthetic bars with a planted signal
    train       Train the topic/expectation model
    predict     Predict next-day returns with a checkpoint
    evaluate    Compute IC, ICIR, Rank IC and Rank ICIR
    backtest    Simulate the top-k dropout strategy
    report      Merge evaluation and backtest results

Examples:
    python tep.py synth --stocks 20 --days 300 --out tmp/synth
    python tep.py ingest tmp/synth/bars.csv --out tmp/store
    python tep.py train --store tmp/store --train-range 2020-03-25:2020-09-30 --epochs 20
    python tep.py predict --model tmp/train --store tmp/store --range 2020-10-01:2020-12-31
    python tep.py evaluate --predictions tmp/predict --store tmp/store
    python tep.py backtest --predictions tmp/predict --store tmp/store --topk 10 --n-drop 2
    python tep.py report --evaluation tmp/evaluate --backtest tmp/backtest

Exit codes:
    0 success, 2 usage or configuration error, 3 data error, 4 numerical divergence
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

sys.path.insert(0, str(Path(__file__).parent))

from commands import backtest, evaluate, ingest, predict, report, synth, train
from libs.config import Constants
from libs.utils import run_command

COMMANDS = {
    'ingest': (ingest, 'Validate raw bars and write a bar store'),
    'synth': (synth, 'Generate synthetic bars with a planted signal'),
    'train': (train, 'Train the topic/expectation model'),
    'predict': (predict, 'Predict next-day returns with a checkpoint'),
    'evaluate': (evaluate, 'Compute IC, ICIR, Rank IC and Rank ICIR'),
    'backtest': (backtest, 'Simulate the top-k dropout strategy'),
    'report': (report, 'Merge evaluation and backtest results'),
}


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the usage exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(Constants.EXIT_USAGE, f"{self.prog}: error: {message}\n")


def create_command_parser() -> argparse.ArgumentParser:
    """Create the main argument parser with subcommands."""
    parser = _Parser(
        prog='tep.py',
        description='Topic/Expectation Pipeline - Unified Command Interface',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="For detailed help on any command, use:\n  python tep.py <command> --help"
    )
    parser.add_argument('--version', action='version', version=f"{Constants.TOOL_NAME} {Constants.TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest='command', help='Available commands', metavar='<command>',
                                       parser_class=_Parser)
    for name, (module, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        module.add_arguments(sub)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entrypoint function."""
    parser = create_command_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return Constants.EXIT_USAGE

    module, _ = COMMANDS[args.command]
    return run_command(module.run, args)


if __name__ == "__main__":
    sys.exit(main())
