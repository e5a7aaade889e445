#!/usr/bin/env python3
"""
Market data ingestion and Alpha360 feature panels

This module validates raw daily bars, keeps the trading calendar and stock
universe, and turns them into per-day feature panels with one-day-return
labels.

Panel row layout: 60 six-value day blocks, oldest first, each block ordered
(open, close, high, low, volume, vwap). Column ``f{6*k + field}`` holds
``field`` of day ``k`` of the lookback window (k = 59 is the panel date).
"""

from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from .artifacts import load_manifest, verify_artifact
from .config import Constants, DataConfig, DateRange
from .errors import (BarConflictError, BarParseError, ConfigurationError, DataError,
                     EmptyPanelError)
from .utils import write_csv

PRICE_FIELDS = ('open', 'high', 'low', 'close', 'vwap')
FEATURE_COLUMNS = [f"f{i:03d}" for i in range(Constants.FEATURE_DIM)]


@dataclass(frozen=True)
class Bar:
    """One stock-day of raw market data."""

    stock_id: str
    date: date
    open: float
    high: float
    low: float
    close: float
    vwap: float
    volume: float


@dataclass(frozen=True)
class RejectedRow:
    row: int
    reason: str


class BarStore:
    """Immutable, validated bar table sorted by (stock_id, date)."""

    def __init__(self, frame: pd.DataFrame):
        self._frame = frame.sort_values(['stock_id', 'date'], kind='mergesort').reset_index(drop=True)
        self.calendar: List[date] = sorted({d.date() for d in self._frame['date']})
        self.stock_ids: List[str] = sorted(self._frame['stock_id'].unique().tolist())
        self._pivots: Dict[str, pd.DataFrame] = {}

    def __len__(self) -> int:
        return len(self._frame)

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    def pivot(self, field_name: str) -> pd.DataFrame:
        """
        Wide view of one field: rows are calendar dates, columns stock ids.

        Missing bars are NaN.
        """
        if field_name not in self._pivots:
            wide = self._frame.pivot(index='date', columns='stock_id', values=field_name)
            wide.index = [d.date() for d in wide.index]
            self._pivots[field_name] = wide.reindex(index=self.calendar, columns=self.stock_ids)
        return self._pivots[field_name]

    def bar(self, stock_id: str, day: date) -> Optional[Bar]:
        rows = self._frame[(self._frame['stock_id'] == stock_id) & (self._frame['date'] == pd.Timestamp(day))]
        if rows.empty:
            return None
        rec = rows.iloc[0]
        return Bar(stock_id=rec['stock_id'], date=day, open=rec['open'], high=rec['high'], low=rec['low'],
                   close=rec['close'], vwap=rec['vwap'], volume=rec['volume'])

    def to_csv(self, file_path: Union[str, Path]) -> Path:
        out = self._frame.copy()
        out['date'] = out['date'].dt.strftime('%Y-%m-%d')
        return write_csv(out[Constants.BAR_COLUMNS], file_path)


@dataclass
class IngestResult:
    store: BarStore
    rejected: List[RejectedRow] = field(default_factory=list)


def ingest_bars(source: Union[str, Path, pd.DataFrame], skip_bad_rows: bool = False) -> IngestResult:
    """
    Parse and validate tabular bar records.

    Row indices in errors are 0-based positions of the record in the source
    (the header is not counted).

    Args:
        source: Bar CSV path or a data frame with the bar columns
        skip_bad_rows (bool): Drop invalid and duplicate rows instead of failing

    Returns:
        IngestResult: The bar store and the rejected rows

    Raises:
        DataError: If required columns are missing
        BarParseError: On the first malformed or invariant-violating row
        BarConflictError: On a duplicate (stock_id, date)
    """
    if isinstance(source, pd.DataFrame):
        raw = source.astype(str).reset_index(drop=True)
    else:
        raw = pd.read_csv(source, dtype=str, keep_default_na=False)

    missing = [c for c in Constants.BAR_COLUMNS if c not in raw.columns]
    if missing:
        raise DataError(f"Bar records are missing columns: {', '.join(missing)}")

    frame = pd.DataFrame({'stock_id': raw['stock_id'].str.strip()})
    frame['date'] = pd.to_datetime(raw['date'].str.strip(), format='%Y-%m-%d', errors='coerce')
    for col in PRICE_FIELDS + ('volume',):
        frame[col] = pd.to_numeric(raw[col].str.strip(), errors='coerce')

    reasons = pd.Series('', index=frame.index)

    def flag(mask: pd.Series, reason: str) -> None:
        hit = mask & (reasons == '')
        reasons[hit] = reason

    flag(frame['stock_id'] == '', 'empty stock_id')
    flag(frame['date'].isna(), 'unparseable date')
    for col in PRICE_FIELDS + ('volume',):
        flag(frame[col].isna() | ~np.isfinite(frame[col].fillna(0.0)), f'unparseable {col}')
    for col in PRICE_FIELDS:
        flag(frame[col] <= 0, f'{col} must be > 0')
    flag(frame['volume'] < 0, 'volume must be >= 0')
    flag(frame['high'] < frame['low'], 'high < low')
    for col in ('open', 'close', 'vwap'):
        flag((frame[col] < frame['low']) | (frame[col] > frame['high']), f'{col} outside [low, high]')

    rejected: List[RejectedRow] = []
    bad = reasons != ''
    if bad.any():
        if not skip_bad_rows:
            first = int(np.flatnonzero(bad.to_numpy())[0])
            raise BarParseError(first, reasons.iloc[first])
        rejected.extend(RejectedRow(int(i), reasons.iloc[i]) for i in np.flatnonzero(bad.to_numpy()))
        frame = frame[~bad]

    dupes = frame.duplicated(['stock_id', 'date'], keep='first')
    if dupes.any():
        first_dupe = frame.index[dupes.to_numpy()][0]
        stock_id, ts = frame.loc[first_dupe, 'stock_id'], frame.loc[first_dupe, 'date']
        same = frame.index[(frame['stock_id'] == stock_id) & (frame['date'] == ts)]
        if not skip_bad_rows:
            raise BarConflictError(stock_id, ts.date(), [int(i) for i in same])
        for idx in frame.index[dupes.to_numpy()]:
            rejected.append(RejectedRow(int(idx), 'duplicate (stock_id, date)'))
        frame = frame[~dupes]

    if rejected:
        logger.warning(f"Skipped {len(rejected)} bad bar row(s)")
    rejected.sort(key=lambda r: r.row)
    return IngestResult(store=BarStore(frame), rejected=rejected)


class Universe:
    """Tradable stock ids per date, ordered by stock id."""

    def __init__(self, membership: Dict[date, Sequence[str]]):
        self.membership: Dict[date, List[str]] = {d: sorted(set(ids)) for d, ids in sorted(membership.items())}

    def members(self, day: date) -> List[str]:
        return self.membership.get(day, [])

    @classmethod
    def from_bars(cls, store: BarStore) -> 'Universe':
        frame = store.frame
        grouped = frame.groupby(frame['date'].dt.date)['stock_id'].apply(list)
        return cls(grouped.to_dict())

    @classmethod
    def from_csv(cls, file_path: Union[str, Path]) -> 'Universe':
        raw = pd.read_csv(file_path, dtype=str)
        missing = [c for c in Constants.UNIVERSE_COLUMNS if c not in raw.columns]
        if missing:
            raise DataError(f"Universe file is missing columns: {', '.join(missing)}")
        days = pd.to_datetime(raw['date'], format='%Y-%m-%d', errors='coerce')
        if days.isna().any():
            row = int(np.flatnonzero(days.isna().to_numpy())[0])
            raise DataError(f"Universe file row {row}: unparseable date")
        raw['date'] = days.dt.date
        return cls(raw.groupby('date')['stock_id'].apply(list).to_dict())

    def to_csv(self, file_path: Union[str, Path]) -> Path:
        rows = [(d.isoformat(), s) for d, ids in self.membership.items() for s in ids]
        return write_csv(pd.DataFrame(rows, columns=Constants.UNIVERSE_COLUMNS), file_path)


@dataclass
class FeaturePanel:
    """
    Alpha360 features of n stocks on one date plus next-day return labels.

    A stock without a close on the next trading day stays in the panel with
    ``label_mask`` False at its row and a zero placeholder label.
    """

    date: date
    stock_ids: List[str]
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    label_mask: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return len(self.stock_ids)

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @property
    def labelled(self) -> np.ndarray:
        """Boolean row mask of stocks that have a label."""
        if self.labels is None:
            return np.zeros(self.n, dtype=bool)
        if self.label_mask is None:
            return np.ones(self.n, dtype=bool)
        return np.asarray(self.label_mask, dtype=bool)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=FEATURE_COLUMNS)
        frame.insert(0, 'stock_id', self.stock_ids)
        frame['label'] = np.where(self.labelled, self.labels, np.nan) if self.labels is not None else np.nan
        return frame

    def to_csv(self, file_path: Union[str, Path]) -> Path:
        return write_csv(self.to_frame(), file_path)

    @classmethod
    def from_csv(cls, file_path: Union[str, Path], day: Optional[date] = None) -> 'FeaturePanel':
        """Read a panel CSV; the date defaults to the file stem (``YYYY-MM-DD.csv``)."""
        path = Path(file_path)
        frame = pd.read_csv(path, dtype={'stock_id': str}, float_precision='round_trip')
        labels = frame['label'].to_numpy(dtype=np.float64)
        mask = np.isfinite(labels)
        return cls(
            date=day or date.fromisoformat(path.stem),
            stock_ids=frame['stock_id'].tolist(),
            features=frame[FEATURE_COLUMNS].to_numpy(dtype=np.float64),
            labels=np.where(mask, labels, 0.0) if mask.any() else None,
            label_mask=None if mask.all() or not mask.any() else mask,
        )


class Alpha360Builder:
    """Builds feature panels from a bar store and universe."""

    def __init__(self, store: BarStore, universe: Optional[Universe] = None,
                 normalize: bool = True, standardize: bool = False, standardize_labels: bool = False):
        self.store = store
        self.universe = universe or Universe.from_bars(store)
        self.normalize = normalize
        self.standardize = standardize
        self.standardize_labels = standardize_labels
        self.calendar = store.calendar
        self._day_index = {d: i for i, d in enumerate(self.calendar)}
        self._col_index = {s: j for j, s in enumerate(store.stock_ids)}
        # (6, days, stocks) in feature block order
        self._cube = np.stack([store.pivot(f).to_numpy(dtype=np.float64) for f in Constants.FEATURE_FIELDS])

    def build(self, day: date) -> FeaturePanel:
        """
        Build the panel of one trading day.

        Membership depends only on bars up to ``day``. A member without a bar
        on the next trading day keeps its row and gets a masked label.

        Raises:
            DataError: If ``day`` is not a trading day
            EmptyPanelError: If no stock has 60 consecutive bars ending at ``day``
        """
        if day not in self._day_index:
            raise DataError(f"{day} is not a trading day")
        i = self._day_index[day]
        lookback = Constants.LOOKBACK_DAYS
        members = [s for s in self.universe.members(day) if s in self._col_index]
        if i < lookback - 1 or not members:
            raise EmptyPanelError(f"No stock has {lookback} consecutive bars ending at {day}")

        cols = np.array([self._col_index[s] for s in members])
        window = self._cube[:, i - lookback + 1:i + 1, :][:, :, cols]  # (6, 60, m)
        keep = np.isfinite(window).all(axis=(0, 1))
        if not keep.any():
            raise EmptyPanelError(f"No stock has {lookback} consecutive bars ending at {day}")

        window = window[:, :, keep]
        features = window.transpose(2, 1, 0).reshape(window.shape[2], Constants.FEATURE_DIM).copy()
        if self.normalize:
            features = self._normalize(features)
        if self.standardize:
            features = self._standardize(features)

        labels, label_mask = None, None
        if i + 1 < len(self.calendar):
            close = self._cube[1]
            ratio = close[i + 1, cols[keep]] / close[i, cols[keep]] - 1.0
            valid = np.isfinite(ratio)
            labels = np.where(valid, ratio, 0.0)
            if self.standardize_labels and valid.any():
                std = labels[valid].std()
                scaled = (labels - labels[valid].mean()) / std if std > 0 else np.zeros_like(labels)
                labels = np.where(valid, scaled, 0.0)
            if not valid.all():
                label_mask = valid

        stock_ids = [s for s, k in zip(members, keep) if k]
        return FeaturePanel(date=day, stock_ids=stock_ids, features=features, labels=labels, label_mask=label_mask)

    @staticmethod
    def _normalize(features: np.ndarray) -> np.ndarray:
        """Divide prices by the current close and volumes by the current volume."""
        n_fields = len(Constants.FEATURE_FIELDS)
        blocks = features.reshape(features.shape[0], Constants.LOOKBACK_DAYS, n_fields)
        volume_idx = Constants.FEATURE_FIELDS.index('volume')
        close_now = blocks[:, -1, Constants.FEATURE_FIELDS.index('close')]
        volume_now = blocks[:, -1, volume_idx].copy()
        volume_now[volume_now == 0] = 1.0
        scale = np.repeat(close_now[:, None], n_fields, axis=1)
        scale[:, volume_idx] = volume_now
        return (blocks / scale[:, None, :]).reshape(features.shape)

    @staticmethod
    def _standardize(features: np.ndarray) -> np.ndarray:
        """Cross-sectional z-score per column; a column constant across stocks becomes 0."""
        std = features.std(axis=0)
        centered = features - features.mean(axis=0)
        return np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)

    def build_all(self, days: Optional[Iterable[date]] = None) -> List[FeaturePanel]:
        """Build every buildable panel, skipping days without qualifying stocks."""
        panels = []
        for day in (days if days is not None else self.calendar):
            try:
                panels.append(self.build(day))
            except EmptyPanelError:
                logger.debug(f"No panel for {day}: insufficient history")
        return panels


def build_alpha360(bars: BarStore, universe: Optional[Universe], day: date,
                   normalize: bool = True, standardize: bool = False) -> FeaturePanel:
    """Build a single Alpha360 feature panel."""
    return Alpha360Builder(bars, universe, normalize=normalize, standardize=standardize).build(day)


def build_panels(store: BarStore, universe: Optional[Universe], data_config: DataConfig) -> List[FeaturePanel]:
    builder = Alpha360Builder(store, universe, normalize=data_config.normalize_features,
                              standardize=data_config.standardize_features,
                              standardize_labels=data_config.standardize_labels)
    return builder.build_all()


def _overlaps(a: Tuple[date, date], b: Tuple[date, date]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def split_dataset(panels: Sequence[FeaturePanel], train_range: DateRange, valid_range: DateRange,
                  test_range: DateRange) -> Tuple[List[FeaturePanel], List[FeaturePanel], List[FeaturePanel]]:
    """
    Assign panels to train/valid/test by inclusive date ranges.

    A ``None`` range is empty. Panels outside every range are dropped.

    Raises:
        ConfigurationError: If ranges overlap or are out of chronological order
    """
    named = [(name, r) for name, r in (('train', train_range), ('valid', valid_range), ('test', test_range)) if r]
    for (name_a, a), (name_b, b) in zip(named, named[1:]):
        if _overlaps(a, b):
            raise ConfigurationError(f"{name_a} range {a[0]}:{a[1]} overlaps {name_b} range {b[0]}:{b[1]}")
        if b[0] < a[0]:
            raise ConfigurationError(f"{name_b} range must come after {name_a} range")
    if len(named) == 3 and _overlaps(named[0][1], named[2][1]):
        raise ConfigurationError("train range overlaps test range")

    ordered = sorted(panels, key=lambda p: p.date)

    def select(r: DateRange) -> List[FeaturePanel]:
        if not r:
            return []
        return [p for p in ordered if r[0] <= p.date <= r[1]]

    return select(train_range), select(valid_range), select(test_range)


@dataclass
class StoreArtifacts:
    """A verified bar store directory."""

    store: BarStore
    universe: Universe
    digests: Dict[str, str]


def load_store(store_dir: Union[str, Path]) -> StoreArtifacts:
    """
    Load the bars and universe written by ``ingest`` after checking their digests.

    Raises:
        UsageError: If the directory has no manifest or a file is missing
        StaleArtifactError: If a file changed since it was written
    """
    directory = Path(store_dir)
    manifest = load_manifest(directory)
    digests = {}
    for name in (Constants.BARS_FILE, Constants.UNIVERSE_FILE):
        digests[name] = verify_artifact(directory / name, manifest)
    store = ingest_bars(directory / Constants.BARS_FILE).store
    universe = Universe.from_csv(directory / Constants.UNIVERSE_FILE)
    return StoreArtifacts(store=store, universe=universe, digests=digests)
