#!/usr/bin/env python3
"""
Synthetic daily bars with a planted predictive signal

Closes follow a geometric random walk. Each stock-day draws a signal x_t,
exposed through the vwap (vwap_t = close_t * (1 + x_t)), and the next day's
return is

    r_{t+1} = signal_strength * x_t + noise * eps_{t+1}

so with noise 0 the normalized vwap feature of the panel date ranks the
next-day returns exactly.
"""

from dataclasses import dataclass
from datetime import date

import numpy as np
import pandas as pd

from .config import Constants
from .errors import ConfigurationError

MIN_DAYS = Constants.LOOKBACK_DAYS + 1


@dataclass(frozen=True)
class PlantedSignal:
    strength: float = 1.0
    noise: float = 0.01
    signal_scale: float = 0.02


def stock_ids(n_stocks: int) -> list:
    width = max(3, len(str(n_stocks - 1)))
    return [f"S{i:0{width}d}" for i in range(n_stocks)]


def generate_bars(n_stocks: int, n_days: int, seed: int = 0, signal: PlantedSignal = PlantedSignal(),
                  start: date = date(2020, 1, 1)) -> pd.DataFrame:
    """
    Generate valid daily bars for ``n_stocks`` stocks over ``n_days`` business days.

    Args:
        n_stocks (int): Number of stocks, at least 2
        n_days (int): Number of trading days, at least 61
        seed (int): Seed of the generator; equal seeds give equal bars
        signal (PlantedSignal): Planted signal settings
        start (date): First business day on or after this date

    Returns:
        pd.DataFrame: Bars with the ingest columns, dates as ISO strings

    Raises:
        ConfigurationError: If n_stocks < 2 or n_days is too short for one feature row
    """
    if n_stocks < 2:
        raise ConfigurationError(f"Need at least 2 stocks, got {n_stocks}")
    if n_days < MIN_DAYS:
        raise ConfigurationError(f"Need at least {MIN_DAYS} days for one Alpha360 row, got {n_days}")
    if signal.noise < 0 or signal.signal_scale < 0:
        raise ConfigurationError("Signal noise and scale must be non-negative")

    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, signal.signal_scale, size=(n_days, n_stocks))
    eps = rng.normal(0.0, 1.0, size=(n_days, n_stocks))
    gap = rng.normal(0.0, 0.005, size=(n_days, n_stocks))
    wick = np.abs(rng.normal(0.0, 0.005, size=(2, n_days, n_stocks)))
    volume = np.round(rng.lognormal(13.0, 0.5, size=(n_days, n_stocks)))
    first_close = rng.uniform(5.0, 50.0, size=n_stocks)

    returns = np.zeros((n_days, n_stocks))
    returns[1:] = signal.strength * x[:-1] + signal.noise * eps[1:]
    returns = np.clip(returns, -0.5, 0.5)
    close = first_close[None, :] * np.cumprod(1.0 + returns, axis=0)

    prev_close = np.vstack([first_close[None, :], close[:-1]])
    open_ = prev_close * (1.0 + gap)
    vwap = close * (1.0 + x)
    high = np.maximum.reduce([open_, close, vwap]) * (1.0 + wick[0])
    low = np.minimum.reduce([open_, close, vwap]) * (1.0 - wick[1])

    days = pd.bdate_range(start=pd.Timestamp(start), periods=n_days).strftime('%Y-%m-%d')
    ids = stock_ids(n_stocks)
    frame = pd.DataFrame({
        'stock_id': np.tile(ids, n_days),
        'date': np.repeat(days, n_stocks),
        'open': open_.ravel(),
        'high': high.ravel(),
        'low': low.ravel(),
        'close': close.ravel(),
        'vwap': vwap.ravel(),
        'volume': volume.ravel(),
    })
    return frame.sort_values(['stock_id', 'date'], kind='mergesort').reset_index(drop=True)[Constants.BAR_COLUMNS]
