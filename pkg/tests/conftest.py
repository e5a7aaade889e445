"""Shared fixtures for the pipeline test suite."""

import sys
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from libs.config import Constants, TrainingConfig  # noqa: E402
from libs.market_data import FeaturePanel, ingest_bars  # noqa: E402
from libs.synthetic import PlantedSignal, generate_bars  # noqa: E402


def make_bars(closes: Dict[str, Sequence[float]], start: str = '2020-01-01',
              volume: float = 1000.0) -> pd.DataFrame:
    """Bars whose open and vwap equal the close, with a 1% high/low band."""
    rows = []
    for stock_id, series in closes.items():
        days = pd.bdate_range(start=start, periods=len(series))
        for day, close in zip(days, series):
            if close is None or (isinstance(close, float) and np.isnan(close)):
                continue
            rows.append({
                'stock_id': stock_id,
                'date': day.strftime('%Y-%m-%d'),
                'open': close,
                'high': close * 1.01,
                'low': close * 0.99,
                'close': close,
                'vwap': close,
                'volume': volume,
            })
    return pd.DataFrame(rows)


def close_table(closes: Dict[str, Sequence[float]], start: str = '2020-01-01') -> pd.DataFrame:
    """Dates x stock ids close table indexed by ``datetime.date``."""
    length = len(next(iter(closes.values())))
    days = [d.date() for d in pd.bdate_range(start=start, periods=length)]
    return pd.DataFrame({k: list(v) for k, v in closes.items()}, index=days, dtype=float)


def random_panels(n_days: int, stock_ids: List[str], d_feat: int = Constants.FEATURE_DIM, seed: int = 0,
                  labels: bool = True, start: str = '2021-01-01') -> List[FeaturePanel]:
    rng = np.random.default_rng(seed)
    days = [d.date() for d in pd.bdate_range(start=start, periods=n_days)]
    return [
        FeaturePanel(date=day, stock_ids=list(stock_ids),
                     features=rng.normal(0.0, 1.0, size=(len(stock_ids), d_feat)),
                     labels=rng.normal(0.0, 0.02, size=len(stock_ids)) if labels else None)
        for day in days
    ]


@pytest.fixture
def synthetic_frame() -> pd.DataFrame:
    return generate_bars(6, 80, seed=11, signal=PlantedSignal(strength=1.0, noise=0.005))


@pytest.fixture
def synthetic_store(synthetic_frame):
    return ingest_bars(synthetic_frame).store


@pytest.fixture
def tiny_config() -> TrainingConfig:
    return TrainingConfig(embedding_size=6, epochs=2, dropout=0.0, bptt_window=5, seed=3)


@pytest.fixture
def stock_ids() -> List[str]:
    return ['A', 'B', 'C', 'D']
