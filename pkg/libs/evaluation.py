#!/usr/bin/env python3
"""
Prediction-quality metrics

Daily Pearson IC and rank IC between predicted and realized returns, and
their aggregation into IC, ICIR, Rank IC and Rank ICIR. Standard deviations
are population standard deviations; rank ties get average ranks.
"""

import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from .errors import AlignmentError, InsufficientDataError, UndefinedCorrelationError
from .market_data import BarStore
from .model_core import ReturnVector
from .utils import write_csv

ArrayLike = Union[np.ndarray, Sequence[float]]


def _pair(predicted: ArrayLike, actual: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise AlignmentError(f"Vectors differ in length ({p.size} vs {a.size})")
    if p.size < 2:
        raise UndefinedCorrelationError(f"Correlation needs at least 2 stocks, got {p.size}")
    return p, a


def _pearson(p: np.ndarray, a: np.ndarray) -> float:
    if np.ptp(p) == 0 or np.ptp(a) == 0:
        raise UndefinedCorrelationError("Correlation with a constant vector is undefined")
    pc, ac = p - p.mean(), a - a.mean()
    value = float(np.dot(pc, ac) / math.sqrt(np.dot(pc, pc) * np.dot(ac, ac)))
    return min(1.0, max(-1.0, value))


def daily_ic(predicted: ArrayLike, actual: ArrayLike) -> float:
    """
    Pearson correlation of one day's predicted and realized returns.

    Raises:
        UndefinedCorrelationError: If either vector is constant or n < 2
    """
    return _pearson(*_pair(predicted, actual))


def average_ranks(values: ArrayLike) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    return pd.Series(np.asarray(values, dtype=np.float64)).rank(method='average').to_numpy()


def daily_rank_ic(predicted: ArrayLike, actual: ArrayLike) -> float:
    """
    Pearson correlation of the average-rank vectors.

    Raises:
        UndefinedCorrelationError: If either vector is fully tied or n < 2
    """
    p, a = _pair(predicted, actual)
    return _pearson(average_ranks(p), average_ranks(a))


def _mean_and_ratio(series: pd.Series) -> Tuple[float, float, bool]:
    values = series.to_numpy(dtype=np.float64)
    mean = float(values.mean())
    if np.ptp(values) == 0:
        return mean, math.nan, False
    return mean, mean / float(values.std(ddof=0)), True


@dataclass
class MetricsReport:
    ic: float
    icir: float
    rank_ic: float
    rank_icir: float
    daily_ic: pd.Series
    daily_rank_ic: pd.Series
    days_used: int
    rank_days_used: int
    icir_defined: bool = True
    rank_icir_defined: bool = True

    def to_frame(self) -> pd.DataFrame:
        rows = [
            ('ic', self.ic),
            ('icir', self.icir),
            ('rank_ic', self.rank_ic),
            ('rank_icir', self.rank_icir),
            ('days_used', self.days_used),
            ('rank_days_used', self.rank_days_used),
            ('icir_defined', int(self.icir_defined)),
            ('rank_icir_defined', int(self.rank_icir_defined)),
        ]
        return pd.DataFrame(rows, columns=['metric', 'value'])

    def daily_frame(self) -> pd.DataFrame:
        frame = pd.concat([self.daily_ic.rename('ic'), self.daily_rank_ic.rename('rank_ic')], axis=1)
        frame = frame.sort_index()
        frame.index = [d.isoformat() for d in frame.index]
        return frame.rename_axis('date').reset_index()

    def write(self, metrics_path: Union[str, Path], daily_path: Union[str, Path]) -> None:
        write_csv(self.to_frame(), metrics_path)
        write_csv(self.daily_frame(), daily_path)


def aggregate(daily_ics: pd.Series, daily_rank_ics: pd.Series) -> MetricsReport:
    """
    Aggregate dated daily IC series into a metrics report.

    Both series hold only the usable days (excluded days are absent or NaN).

    Raises:
        InsufficientDataError: If fewer than two usable days remain
    """
    ics = daily_ics.dropna()
    rank_ics = daily_rank_ics.dropna()
    if len(ics) < 2 or len(rank_ics) < 2:
        raise InsufficientDataError(
            f"Need at least 2 usable days, got {len(ics)} (IC) and {len(rank_ics)} (rank IC)")

    ic, icir, icir_defined = _mean_and_ratio(ics)
    rank_ic, rank_icir, rank_defined = _mean_and_ratio(rank_ics)
    if not icir_defined:
        logger.warning("Daily IC series is constant; ICIR is undefined")
    if not rank_defined:
        logger.warning("Daily rank IC series is constant; Rank ICIR is undefined")
    return MetricsReport(ic=ic, icir=icir, rank_ic=rank_ic, rank_icir=rank_icir,
                         daily_ic=ics, daily_rank_ic=rank_ics,
                         days_used=len(ics), rank_days_used=len(rank_ics),
                         icir_defined=icir_defined, rank_icir_defined=rank_defined)


def align_returns(predicted: Sequence[ReturnVector],
                  actual: Sequence[ReturnVector]) -> List[Tuple[date, np.ndarray, np.ndarray]]:
    """
    Pair predicted and realized vectors date by date, matched by stock id.

    Labels for stocks without a prediction are ignored. Predicted stocks whose
    label is masked out (no next-day close) are left out of that date's pair.

    Raises:
        AlignmentError: Naming the first date present on only one side or
            with a predicted stock that has no label
    """
    by_date: Dict[date, ReturnVector] = {a.date: a for a in actual}
    pred_dates = [p.date for p in predicted]
    unmatched = sorted(set(pred_dates).symmetric_difference(by_date))
    if unmatched:
        raise AlignmentError(f"Predictions and labels are misaligned at {unmatched[0]}", unmatched[0])

    pairs = []
    for p in sorted(predicted, key=lambda v: v.date):
        a = by_date[p.date]
        unlabeled = sorted(set(p.stock_ids) - set(a.stock_ids))
        if unlabeled:
            raise AlignmentError(f"No label for {unlabeled[0]} at {p.date}", p.date)
        mask = np.ones(len(a.stock_ids), dtype=bool) if a.mask is None else np.asarray(a.mask, dtype=bool)
        labels = pd.Series(np.where(mask, a.numpy(), np.nan), index=a.stock_ids).reindex(p.stock_ids).to_numpy()
        keep = np.isfinite(labels)
        if not keep.all():
            logger.debug(f"{p.date}: {int((~keep).sum())} predicted stock(s) without a realized return")
        pairs.append((p.date, p.numpy()[keep], labels[keep]))
    return pairs


def daily_series(predicted: Sequence[ReturnVector],
                 actual: Sequence[ReturnVector]) -> Tuple[pd.Series, pd.Series]:
    """Daily IC and rank IC, skipping days where either is undefined."""
    ics: Dict[date, float] = {}
    rank_ics: Dict[date, float] = {}
    for day, p, a in align_returns(predicted, actual):
        try:
            ics[day] = daily_ic(p, a)
        except UndefinedCorrelationError as e:
            logger.warning(f"Excluding {day} from IC: {e}")
        try:
            rank_ics[day] = daily_rank_ic(p, a)
        except UndefinedCorrelationError as e:
            logger.warning(f"Excluding {day} from rank IC: {e}")
    return pd.Series(ics, dtype=np.float64), pd.Series(rank_ics, dtype=np.float64)


def evaluate(predicted: Sequence[ReturnVector], actual: Sequence[ReturnVector]) -> MetricsReport:
    """Compute the full metrics report for aligned prediction and label sequences."""
    return aggregate(*daily_series(predicted, actual))


def realized_returns(store: BarStore, days: Sequence[date]) -> List[ReturnVector]:
    """
    Next-trading-day close-to-close returns of every stock priced on ``day``.

    Stocks without a close on the next trading day are masked out.

    Raises:
        AlignmentError: If a day is not a trading day or has no next trading day
    """
    close = store.pivot('close')
    index = {d: i for i, d in enumerate(store.calendar)}
    vectors = []
    for day in days:
        i = index.get(day)
        if i is None or i + 1 >= len(store.calendar):
            raise AlignmentError(f"No realized next-day return for {day}", day)
        priced = close.iloc[i].notna()
        ratio = (close.iloc[i + 1] / close.iloc[i] - 1.0)[priced].to_numpy(dtype=np.float64)
        mask = np.isfinite(ratio)
        vectors.append(ReturnVector(day, close.columns[priced.to_numpy()].tolist(), np.where(mask, ratio, 0.0),
                                    None if mask.all() else mask))
    return vectors


def mean_ic(predicted: Sequence[ReturnVector], actual: Sequence[ReturnVector]) -> float:
    """Mean daily IC over the usable days; NaN when none is usable."""
    ics, _ = daily_series(predicted, actual)
    return float(ics.mean()) if len(ics) else math.nan
