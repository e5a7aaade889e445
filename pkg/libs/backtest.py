#!/usr/bin/env python3
"""
Top-k dropout trading simulation

On the first date the k best-predicted tradable stocks are bought with equal
budgets. On every later date the ``n_drop`` held stocks with the lowest
predictions are sold and replaced by the best-predicted unheld stocks. When
fewer than ``n_drop`` unheld stocks can be bought, only that many are rotated.

All fills happen at the date's close. Ranks are by prediction, descending,
ties broken by stock id. Positions are valued at the last known close.
"""

import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from .config import BacktestConfig, Constants
from .errors import AlignmentError, BootstrapError, ConfigurationError, DataError, InsufficientDataError
from .market_data import BarStore
from .model_core import ReturnVector
from .utils import write_csv


@dataclass
class LedgerEntry:
    date: date
    action: str
    stock_id: str
    shares: float
    price: float
    cost: float
    cash_after: float
    equity_after: float


@dataclass
class BacktestLedger:
    initial_cash: float
    entries: List[LedgerEntry] = field(default_factory=list)
    holdings: Dict[date, Dict[str, float]] = field(default_factory=dict)
    cash: Dict[date, float] = field(default_factory=dict)
    equity: Dict[date, float] = field(default_factory=dict)

    @property
    def dates(self) -> List[date]:
        return list(self.equity)

    def equity_curve(self) -> pd.Series:
        return pd.Series(self.equity, dtype=np.float64)

    def daily_returns(self) -> pd.Series:
        """Equity return per date; the first date is measured against the initial cash."""
        curve = self.equity_curve()
        previous = curve.shift(1)
        previous.iloc[0] = self.initial_cash
        return curve / previous - 1.0

    def trades(self) -> List[LedgerEntry]:
        return [e for e in self.entries if e.action != Constants.ACTION_MARK]

    def to_frame(self) -> pd.DataFrame:
        rows = [(e.date.isoformat(), e.action, e.stock_id, e.shares, e.price, e.cost, e.cash_after, e.equity_after)
                for e in self.entries]
        return pd.DataFrame(rows, columns=Constants.LEDGER_COLUMNS)

    def to_csv(self, file_path: Union[str, Path]) -> Path:
        return write_csv(self.to_frame(), file_path)


def rank_stocks(prediction: ReturnVector) -> List[str]:
    """Stock ids best-first; equal predictions are ordered by stock id."""
    values = prediction.numpy()
    order = sorted(range(len(values)), key=lambda i: (-values[i], prediction.stock_ids[i]))
    return [prediction.stock_ids[i] for i in order]


class TopkDropoutSimulator:
    """Stateful simulation over a price table."""

    def __init__(self, close: pd.DataFrame, config: BacktestConfig):
        self.close = close
        self.last_close = close.ffill()
        self.config = config
        self.cash = config.initial_cash
        self.positions: Dict[str, float] = {}
        self.ledger = BacktestLedger(initial_cash=config.initial_cash)

    def _price(self, day: date, stock_id: str) -> float:
        if stock_id not in self.close.columns or day not in self.close.index:
            return math.nan
        return float(self.close.at[day, stock_id])

    def _tradable(self, day: date, stock_id: str) -> bool:
        price = self._price(day, stock_id)
        return math.isfinite(price) and price > 0

    def equity(self, day: date) -> float:
        value = self.cash
        for stock_id, shares in self.positions.items():
            value += shares * float(self.last_close.at[day, stock_id])
        return value

    def _record(self, day: date, action: str, stock_id: str, shares: float, price: float, cost: float) -> None:
        self.ledger.entries.append(LedgerEntry(day, action, stock_id, shares, price, cost,
                                               self.cash, self.equity(day)))

    def sell(self, day: date, stock_id: str) -> None:
        shares = self.positions.pop(stock_id)
        price = self._price(day, stock_id)
        proceeds = shares * price
        cost = proceeds * self.config.transaction_cost_rate
        self.cash += proceeds - cost
        self._record(day, Constants.ACTION_SELL, stock_id, shares, price, cost)

    def buy(self, day: date, stock_id: str, budget: float) -> None:
        price = self._price(day, stock_id)
        shares = budget / (price * (1.0 + self.config.transaction_cost_rate))
        notional = shares * price
        cost = notional * self.config.transaction_cost_rate
        self.cash -= notional + cost
        self.positions[stock_id] = shares
        self._record(day, Constants.ACTION_BUY, stock_id, shares, price, cost)

    def _buy_equal(self, day: date, stock_ids: Sequence[str]) -> None:
        if not stock_ids:
            return
        budget = self.cash / len(stock_ids)
        for stock_id in stock_ids:
            self.buy(day, stock_id, budget)

    def bootstrap(self, prediction: ReturnVector) -> None:
        day, k = prediction.date, self.config.topk
        ranked = [s for s in rank_stocks(prediction) if self._tradable(day, s)]
        if len(ranked) < k:
            raise BootstrapError(f"Only {len(ranked)} tradable stock(s) on {day}, need {k}")
        self._buy_equal(day, ranked[:k])

    def rebalance(self, prediction: ReturnVector) -> None:
        day, k, n_drop = prediction.date, self.config.topk, self.config.n_drop
        ranked = rank_stocks(prediction)
        slots = max(0, k - len(self.positions))

        # both lists are best-first
        sellable = [s for s in ranked if s in self.positions and self._tradable(day, s)]
        candidates = [s for s in ranked if s not in self.positions and self._tradable(day, s)]
        wanted = min(n_drop, len(sellable))
        n_sell = min(wanted, max(0, len(candidates) - slots))
        if n_sell < wanted:
            logger.warning(f"{day}: only {len(candidates)} buyable candidate(s); rotating {n_sell} of {wanted}")

        for stock_id in reversed(sellable[len(sellable) - n_sell:]):
            self.sell(day, stock_id)
        self._buy_equal(day, candidates[:n_sell + slots])

    def mark(self, day: date) -> None:
        self.ledger.holdings[day] = dict(self.positions)
        self.ledger.cash[day] = self.cash
        self.ledger.equity[day] = self.equity(day)
        self._record(day, Constants.ACTION_MARK, '', float(len(self.positions)), math.nan, 0.0)


def run_topk_dropout(predictions: Sequence[ReturnVector], bars: Union[BarStore, pd.DataFrame],
                     config: BacktestConfig) -> BacktestLedger:
    """
    Simulate the top-k dropout strategy.

    Args:
        predictions: Prediction vectors in date order
        bars: Bar store, or a close-price table (dates x stock ids)
        config: Strategy settings

    Returns:
        BacktestLedger: Trades, marks, holdings, cash and equity per date

    Raises:
        ConfigurationError: If ``topk`` exceeds the number of predicted stocks
        BootstrapError: If fewer than ``topk`` stocks are tradable on the first date
        DataError: If a prediction date has no prices
    """
    if not predictions:
        raise InsufficientDataError("No predictions to trade")
    for prev, cur in zip(predictions, predictions[1:]):
        if cur.date <= prev.date:
            raise DataError(f"Predictions are not in date order ({prev.date} then {cur.date})")
    universe = {s for p in predictions for s in p.stock_ids}
    if config.topk > len(universe):
        raise ConfigurationError(f"topk ({config.topk}) exceeds the {len(universe)} predicted stocks")

    close = bars.pivot('close') if isinstance(bars, BarStore) else bars
    missing = [p.date for p in predictions if p.date not in close.index]
    if missing:
        raise DataError(f"No prices for prediction date {missing[0]}")

    sim = TopkDropoutSimulator(close, config)
    for i, prediction in enumerate(predictions):
        if i == 0:
            sim.bootstrap(prediction)
        else:
            sim.rebalance(prediction)
        sim.mark(prediction.date)
    return sim.ledger


def annualized_return(equity: Sequence[float], initial: float, trading_days_per_year: int = 252) -> float:
    """Geometric annualization of final/initial over the curve's length."""
    values = np.asarray(equity, dtype=np.float64)
    return float((values[-1] / initial) ** (trading_days_per_year / len(values)) - 1.0)


def max_drawdown(equity: Sequence[float]) -> float:
    """Minimum of (value - running peak) / running peak; 0 for a curve that never falls."""
    worst, peak = 0.0, -math.inf
    for value in np.asarray(equity, dtype=np.float64):
        peak = max(peak, value)
        worst = min(worst, (value - peak) / peak)
    return worst


@dataclass
class BacktestReport:
    annualized_return: float
    max_drawdown: float
    information_ratio: float
    equity_curve: pd.Series
    benchmark_curve: pd.Series
    ir_defined: bool = True

    def to_frame(self) -> pd.DataFrame:
        rows = [
            ('annualized_return', self.annualized_return),
            ('max_drawdown', self.max_drawdown),
            ('information_ratio', self.information_ratio),
            ('ir_defined', int(self.ir_defined)),
        ]
        return pd.DataFrame(rows, columns=['metric', 'value'])

    def curves_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'date': [d.isoformat() for d in self.equity_curve.index],
            'equity': self.equity_curve.to_numpy(),
            'benchmark': self.benchmark_curve.to_numpy(),
        })

    def write(self, report_path: Union[str, Path], curves_path: Union[str, Path]) -> None:
        write_csv(self.to_frame(), report_path)
        write_csv(self.curves_frame(), curves_path)


def compute_report(ledger: BacktestLedger, benchmark: pd.Series, config: BacktestConfig) -> BacktestReport:
    """
    Annualized return, max drawdown and information ratio of a ledger.

    Args:
        ledger: Simulation output
        benchmark: Benchmark value per date; must cover every ledger date
        config: Supplies ``trading_days_per_year``

    Raises:
        InsufficientDataError: If the ledger has fewer than two dates
        AlignmentError: If the benchmark misses a ledger date
    """
    equity = ledger.equity_curve()
    if len(equity) < 2:
        raise InsufficientDataError(f"Report needs at least 2 dates, ledger has {len(equity)}")
    absent = [d for d in equity.index if d not in benchmark.index]
    if absent:
        raise AlignmentError(f"Benchmark has no value for {absent[0]}", absent[0])
    bench = benchmark.reindex(equity.index).astype(np.float64)

    excess = (equity.pct_change() - bench.pct_change()).iloc[1:].to_numpy()
    if np.ptp(excess) == 0:
        logger.warning("Strategy and benchmark returns differ by a constant; information ratio is undefined")
        information_ratio, ir_defined = math.nan, False
    else:
        information_ratio = float(excess.mean() / excess.std(ddof=0) * math.sqrt(config.trading_days_per_year))
        ir_defined = True

    return BacktestReport(
        annualized_return=annualized_return(equity.to_numpy(), ledger.initial_cash, config.trading_days_per_year),
        max_drawdown=max_drawdown(equity.to_numpy()),
        information_ratio=information_ratio,
        equity_curve=equity,
        benchmark_curve=bench,
        ir_defined=ir_defined,
    )


def equal_weight_benchmark(store: BarStore, dates: Sequence[date], initial_cash: float = 1.0) -> pd.Series:
    """
    Value of an equal-weight portfolio of every stock, rebalanced each date.

    The return between consecutive dates is the mean close-to-close return of
    the stocks priced on both dates.
    """
    close = store.pivot('close')
    values = [initial_cash]
    for prev, cur in zip(dates, dates[1:]):
        ratio = close.loc[cur] / close.loc[prev]
        ratio = ratio[np.isfinite(ratio)]
        values.append(values[-1] * (float(ratio.mean()) if len(ratio) else 1.0))
    return pd.Series(values, index=list(dates), dtype=np.float64)


def load_index_benchmark(file_path: Union[str, Path], dates: Sequence[date], initial_cash: float = 1.0) -> pd.Series:
    """
    Read a ``date,close`` index series and rescale it to ``initial_cash`` on the first date.

    Raises:
        DataError: If the file lacks the expected columns
        AlignmentError: If a date is missing from the file
    """
    frame = pd.read_csv(file_path, dtype={'date': str}, float_precision='round_trip')
    missing_cols = [c for c in Constants.BENCHMARK_COLUMNS if c not in frame.columns]
    if missing_cols:
        raise DataError(f"Benchmark file is missing columns: {', '.join(missing_cols)}")
    series = pd.Series(frame['close'].to_numpy(dtype=np.float64),
                       index=[date.fromisoformat(d) for d in frame['date']])
    absent = [d for d in dates if d not in series.index]
    if absent:
        raise AlignmentError(f"Benchmark file has no value for {absent[0]}", absent[0])
    series = series.reindex(list(dates))
    return series / series.iloc[0] * initial_cash


def build_benchmark(store: BarStore, dates: Sequence[date], config: BacktestConfig) -> pd.Series:
    if config.benchmark == 'index':
        return load_index_benchmark(config.benchmark_path, dates, config.initial_cash)
    return equal_weight_benchmark(store, dates, config.initial_cash)
