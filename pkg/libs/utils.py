#!/usr/bin/env python3
"""
Topic/Expectation Pipeline Utilities

This module provides common helpers used across all command scripts including:
- Console message helpers
- Seeding for reproducible runs
- Shared command-line flags
- CSV writing with a fixed float format
- Error-to-exit-code translation for commands
"""

import argparse
import random
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Union

import numpy as np
import pandas as pd
import torch
from loguru import logger
from rich.console import Console
from rich.table import Table

from .artifacts import atomic_write_text
from .config import Config, Constants
from .errors import PipelineError
from .logging import PipelineLogger

console = Console(stderr=True)


def print_success(message: str) -> None:
    """Print a success message with formatting."""
    console.print(f"[green]✅ {message}[/green]")


def print_error(message: str) -> None:
    """Print an error message with formatting."""
    console.print(f"[red]❌ {message}[/red]")


def print_warning(message: str) -> None:
    """Print a warning message with formatting."""
    console.print(f"[yellow]⚠️  {message}[/yellow]")


def print_table(title: str, rows: Iterable[Dict[str, Any]]) -> None:
    """
    Render a list of homogeneous mappings as a rich table.

    Args:
        title (str): Table title
        rows (Iterable[Dict[str, Any]]): Rows keyed by column name
    """
    rows = list(rows)
    table = Table(title=title)
    if not rows:
        console.print(table)
        return
    for column in rows[0]:
        table.add_column(str(column))
    for row in rows:
        table.add_row(*(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row.values()))
    console.print(table)


def seed_everything(seed: int) -> None:
    """
    Seed every random source used by the pipeline.

    Args:
        seed (int): Seed value
    """
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.set_num_threads(Config.TORCH_THREADS)
    torch.use_deterministic_algorithms(True)


def add_global_arguments(parser: argparse.ArgumentParser) -> None:
    """
    Add the flags every subcommand accepts.

    Args:
        parser (argparse.ArgumentParser): Subcommand parser
    """
    parser.add_argument(
        '--config',
        type=Path,
        help='Flat key = value config file (CLI flags take precedence)'
    )
    parser.add_argument(
        '--seed',
        type=int,
        help='Random seed (default: 0)'
    )
    parser.add_argument(
        '--out',
        type=Path,
        help=f'Output directory (default: {Config.OUT_DIR}/<command>)'
    )


def resolve_out_dir(args: argparse.Namespace, command: str) -> Path:
    """Return the output directory for a command, defaulting under ``Config.OUT_DIR``."""
    out = getattr(args, 'out', None)
    return Path(out) if out else Config.OUT_DIR / command


def write_csv(frame: pd.DataFrame, file_path: Union[str, Path], index: bool = False) -> Path:
    """
    Write a data frame as CSV with round-trip float formatting, atomically.

    Args:
        frame (pd.DataFrame): Data to write
        file_path (Union[str, Path]): Destination
        index (bool): Whether to write the index

    Returns:
        Path: Written file
    """
    text = frame.to_csv(index=index, float_format=Constants.FLOAT_FORMAT, lineterminator='\n')
    return atomic_write_text(file_path, text)


def run_command(func: Callable[[argparse.Namespace], int], args: argparse.Namespace) -> int:
    """
    Run a command function and translate escaping errors into exit codes.

    Args:
        func: Command ``run`` function
        args: Parsed arguments

    Returns:
        int: Process exit code
    """
    try:
        return func(args)
    except PipelineError as e:
        PipelineLogger.log_error(e, context=getattr(args, 'command', None) or func.__module__)
        print_error(str(e))
        return e.exit_code
    except KeyboardInterrupt:
        print_warning("Interrupted")
        return Constants.EXIT_FAILURE
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print_error(f"Unexpected error: {e}")
        return Constants.EXIT_FAILURE
