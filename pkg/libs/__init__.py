#!/usr/bin/env python3
"""
Topic/Expectation Pipeline Libraries

This package contains reusable libraries for:
- Market data ingestion and Alpha360 feature panels
- The differentiable topic/expectation model and its checkpoints
- Training, evaluation metrics and the top-k dropout backtest
- Configuration, logging, errors and artifact integrity
"""

from .config import BacktestConfig, Config, Constants, DataConfig, TrainingConfig
from .errors import PipelineError
from .logging import PipelineLogger, setup_logging
from .market_data import Alpha360Builder, BarStore, FeaturePanel, Universe, ingest_bars
from .model_core import ReturnVector, TopicExpectationModel
from .training import Trainer, predict
from .evaluation import MetricsReport, evaluate
from .backtest import BacktestLedger, BacktestReport, compute_report, run_topk_dropout
from .utils import print_error, print_success, print_warning, seed_everything

__all__ = [
    'BacktestConfig',
    'Config',
    'Constants',
    'DataConfig',
    'TrainingConfig',
    'PipelineError',
    'PipelineLogger',
    'setup_logging',
    'Alpha360Builder',
    'BarStore',
    'FeaturePanel',
    'Universe',
    'ingest_bars',
    'ReturnVector',
    'TopicExpectationModel',
    'Trainer',
    'predict',
    'MetricsReport',
    'evaluate',
    'BacktestLedger',
    'BacktestReport',
    'compute_report',
    'run_topk_dropout',
    'print_error',
    'print_success',
    'print_warning',
    'seed_everything',
]
