#!/usr/bin/env python3
"""
Configuration module for the Topic/Expectation Pipeline

This module centralizes environment settings, constants and the typed run
configurations (training, data, backtest) together with the flat
``key = value`` config file loader.
"""

import os
from datetime import date
from pathlib import Path
from typing import Any, Dict, Iterable, Literal, Mapping, Optional, Tuple, Type, TypeVar

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError

load_dotenv()


class Config:
    """Centralized environment configuration."""

    # Logging
    LOG_LEVEL = os.getenv('TEP_LOG_LEVEL', 'INFO')
    DEBUG_MODE = os.getenv('TEP_DEBUG', 'false').lower() == 'true'

    # File Paths
    OUT_DIR = Path(os.getenv('TEP_OUT_DIR', 'tmp'))

    # Torch runtime; a single thread keeps CPU reductions bit-reproducible
    TORCH_THREADS = int(os.getenv('TEP_TORCH_THREADS', '1'))


class Constants:
    """Application constants."""

    TOOL_NAME = 'tep'
    TOOL_VERSION = '1.0.0'

    # Artifact file names
    BARS_FILE = 'bars.csv'
    UNIVERSE_FILE = 'universe.csv'
    MANIFEST_FILE = 'manifest.json'
    LOCK_FILE = '.tep.lock'
    LOG_FILE = 'run.log'
    CHECKPOINT_FILE = 'model.ckpt'
    TRAINING_RECORD_FILE = 'training_record.csv'
    PREDICTIONS_FILE = 'predictions.csv'
    METRICS_FILE = 'metrics.csv'
    DAILY_IC_FILE = 'daily_ic.csv'
    LEDGER_FILE = 'ledger.csv'
    BACKTEST_REPORT_FILE = 'backtest_report.csv'
    CURVES_FILE = 'curves.csv'
    REPORT_FILE = 'report.csv'
    PANELS_DIR = 'panels'

    # CSV layouts
    BAR_COLUMNS = ['stock_id', 'date', 'open', 'high', 'low', 'close', 'vwap', 'volume']
    UNIVERSE_COLUMNS = ['date', 'stock_id']
    BENCHMARK_COLUMNS = ['date', 'close']
    LEDGER_COLUMNS = ['date', 'action', 'stock_id', 'shares', 'price', 'cost', 'cash_after', 'equity_after']
    RECORD_COLUMNS = ['epoch', 'train_loss', 'valid_ic', 'seconds', 'checkpoint']
    PREDICTION_COLUMNS = ['date', 'stock_id', 'prediction']

    # Alpha360 layout
    FEATURE_FIELDS = ('open', 'close', 'high', 'low', 'volume', 'vwap')
    LOOKBACK_DAYS = 60
    FEATURE_DIM = 360

    # Checkpoint container
    CHECKPOINT_MAGIC = b'TEPCKPT\x00'
    CHECKPOINT_VERSION = 1

    # Exit codes
    EXIT_OK = 0
    EXIT_FAILURE = 1
    EXIT_USAGE = 2
    EXIT_DATA = 3
    EXIT_DIVERGENCE = 4

    # Trade actions
    ACTION_BUY = 'BUY'
    ACTION_SELL = 'SELL'
    ACTION_MARK = 'MARK'

    FLOAT_FORMAT = '%.17g'


DateRange = Optional[Tuple[date, date]]


def parse_date_range(value: Any) -> DateRange:
    """
    Parse an inclusive ``START:END`` ISO date range.

    Args:
        value: ``None``, an empty string, a ``(start, end)`` pair or ``START:END``

    Returns:
        DateRange: ``(start, end)`` or ``None`` for an empty range
    """
    if value is None or value == '':
        return None
    if isinstance(value, (tuple, list)):
        start, end = value
    else:
        parts = str(value).split(':')
        if len(parts) != 2:
            raise ValueError(f"Date range must look like START:END, got {value!r}")
        start, end = parts
    start = start if isinstance(start, date) else date.fromisoformat(str(start).strip())
    end = end if isinstance(end, date) else date.fromisoformat(str(end).strip())
    if end < start:
        raise ValueError(f"Date range ends before it starts: {value!r}")
    return start, end


class TrainingConfig(BaseModel):
    """Hyperparameters of the day-recursive training loop."""

    model_config = ConfigDict(extra='forbid')

    learning_rate: float = Field(0.001, gt=0)
    epochs: int = Field(300, ge=1)
    dropout: float = Field(0.1, ge=0, lt=1)
    embedding_size: int = Field(128, ge=1)
    seed: int = 0
    bptt_window: int = Field(60, ge=1)
    optimizer: Literal['adam'] = 'adam'
    grad_clip_norm: float = Field(5.0, gt=0)
    topics_reinit_daily: bool = False
    separate_head_weights: bool = False
    plain_lstm: bool = False


class DataConfig(BaseModel):
    """Feature construction and dataset split settings."""

    model_config = ConfigDict(extra='forbid')

    normalize_features: bool = True
    standardize_features: bool = True
    standardize_labels: bool = False
    train_range: DateRange = None
    valid_range: DateRange = None
    test_range: DateRange = None

    @field_validator('train_range', 'valid_range', 'test_range', mode='before')
    @classmethod
    def _parse_range(cls, value: Any) -> DateRange:
        return parse_date_range(value)


class BacktestConfig(BaseModel):
    """Top-k dropout simulation settings."""

    model_config = ConfigDict(extra='forbid')

    topk: int = Field(50, ge=1)
    n_drop: int = Field(5, ge=1)
    transaction_cost_rate: float = Field(0.0, ge=0, lt=1)
    initial_cash: float = Field(1.0, gt=0)
    trading_days_per_year: int = Field(252, ge=1)
    benchmark: Literal['equal_weight', 'index'] = 'equal_weight'
    benchmark_path: Optional[Path] = None

    @model_validator(mode='after')
    def _check_counts(self) -> 'BacktestConfig':
        if self.n_drop > self.topk:
            raise ValueError(f"n_drop ({self.n_drop}) must not exceed topk ({self.topk})")
        if self.benchmark == 'index' and self.benchmark_path is None:
            raise ValueError("benchmark 'index' requires benchmark_path")
        return self


CONFIG_MODELS: Tuple[Type[BaseModel], ...] = (TrainingConfig, DataConfig, BacktestConfig)

ModelT = TypeVar('ModelT', bound=BaseModel)


def load_config_file(config_path: Optional[Path]) -> Dict[str, str]:
    """
    Load a flat ``key = value`` config file.

    Blank lines and ``#`` comments are ignored. Every key must belong to one of
    the run configuration models.

    Args:
        config_path (Optional[Path]): File to read; ``None`` yields an empty mapping

    Returns:
        Dict[str, str]: Raw string values keyed by field name

    Raises:
        ConfigurationError: On malformed lines, duplicate or unknown keys
    """
    if config_path is None:
        return {}

    path = Path(config_path)
    if not path.exists():
        raise ConfigurationError(f"Config file not found: {path}")

    known = set().union(*(model.model_fields for model in CONFIG_MODELS))
    values: Dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text(encoding='utf-8').splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigurationError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in known:
            raise ConfigurationError(f"{path}:{line_no}: unknown config key '{key}'")
        if key in values:
            raise ConfigurationError(f"{path}:{line_no}: duplicate config key '{key}'")
        values[key] = value
    return values


def resolve_config(model: Type[ModelT], file_values: Mapping[str, Any],
                   overrides: Optional[Mapping[str, Any]] = None) -> ModelT:
    """
    Build one run configuration with CLI > file > default precedence.

    Args:
        model: Configuration model class
        file_values: Values read from the config file (all sections)
        overrides: CLI values; ``None`` entries mean "not given"

    Returns:
        The validated configuration instance

    Raises:
        ConfigurationError: If validation fails
    """
    fields = model.model_fields
    merged: Dict[str, Any] = {k: v for k, v in file_values.items() if k in fields}
    for key, value in (overrides or {}).items():
        if value is not None and key in fields:
            merged[key] = value
    try:
        return model.model_validate(merged)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid {model.__name__}: {e}") from e


def config_snapshot(configs: Iterable[BaseModel]) -> Dict[str, Any]:
    """Flatten configuration models into one JSON-ready mapping."""
    snapshot: Dict[str, Any] = {}
    for cfg in configs:
        snapshot.update(cfg.model_dump(mode='json'))
    return snapshot
