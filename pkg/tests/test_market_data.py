from datetime import date

import numpy as np
import pandas as pd
import pytest

from conftest import make_bars
from libs.config import Constants, DataConfig
from libs.errors import BarConflictError, BarParseError, ConfigurationError, DataError, EmptyPanelError
from libs.market_data import (Alpha360Builder, FeaturePanel, Universe, build_alpha360, build_panels, ingest_bars,
                              split_dataset)

LOOKBACK = Constants.LOOKBACK_DAYS


def linear_closes(n_days, base=10.0, step=0.1):
    return [base + step * i for i in range(n_days)]


def test_ingest_valid_frame():
    frame = make_bars({'B': [10.0, 11.0], 'A': [5.0, 6.0]})
    result = ingest_bars(frame)
    store = result.store
    assert result.rejected == []
    assert store.stock_ids == ['A', 'B']
    assert store.calendar == [date(2020, 1, 1), date(2020, 1, 2)]
    assert store.pivot('close').loc[date(2020, 1, 2), 'B'] == 11.0
    assert store.bar('A', date(2020, 1, 1)).close == 5.0
    assert store.bar('A', date(2021, 1, 1)) is None


def test_ingest_reports_first_bad_row():
    frame = make_bars({'A': [10.0, 11.0, 12.0]})
    frame.loc[1, 'low'] = 20.0
    frame.loc[2, 'volume'] = -1
    with pytest.raises(BarParseError) as excinfo:
        ingest_bars(frame)
    assert excinfo.value.row == 1
    assert excinfo.value.exit_code == 3


@pytest.mark.parametrize('column,value', [
    ('close', 'abc'),
    ('close', '0'),
    ('date', '2020-13-01'),
    ('vwap', '100'),
])
def test_ingest_rejects_invalid_values(column, value):
    frame = make_bars({'A': [10.0, 11.0]}).astype(str)
    frame.loc[0, column] = value
    with pytest.raises(BarParseError):
        ingest_bars(frame)


def test_ingest_skip_bad_rows():
    frame = make_bars({'A': [10.0, 11.0, 12.0]})
    frame.loc[1, 'high'] = 1.0
    result = ingest_bars(frame, skip_bad_rows=True)
    assert [r.row for r in result.rejected] == [1]
    assert len(result.store) == 2


def test_duplicate_bar_conflict():
    frame = make_bars({'A': [10.0, 11.0]})
    frame = pd.concat([frame, frame.iloc[[0]]], ignore_index=True)
    with pytest.raises(BarConflictError) as excinfo:
        ingest_bars(frame)
    assert excinfo.value.rows == (0, 2)
    assert excinfo.value.stock_id == 'A'

    result = ingest_bars(frame, skip_bad_rows=True)
    assert [r.row for r in result.rejected] == [2]


def test_missing_columns():
    frame = make_bars({'A': [10.0]}).drop(columns=['vwap'])
    with pytest.raises(DataError, match='vwap'):
        ingest_bars(frame)


def test_alpha360_layout_unnormalized():
    closes = linear_closes(LOOKBACK + 1)
    store = ingest_bars(make_bars({'A': closes, 'B': [2 * c for c in closes]})).store
    builder = Alpha360Builder(store, normalize=False)
    day = store.calendar[LOOKBACK - 1]
    panel = builder.build(day)

    assert panel.stock_ids == ['A', 'B']
    assert panel.features.shape == (2, Constants.FEATURE_DIM)
    row = panel.features[0].reshape(LOOKBACK, len(Constants.FEATURE_FIELDS))
    # block k holds (open, close, high, low, volume, vwap) of window day k
    np.testing.assert_allclose(row[:, 1], closes[:LOOKBACK])
    np.testing.assert_allclose(row[0], [closes[0], closes[0], closes[0] * 1.01, closes[0] * 0.99, 1000.0, closes[0]])
    assert panel.labels[0] == pytest.approx(closes[LOOKBACK] / closes[LOOKBACK - 1] - 1.0)


def test_alpha360_normalization():
    closes = linear_closes(LOOKBACK + 1)
    store = ingest_bars(make_bars({'A': closes, 'B': closes})).store
    panel = Alpha360Builder(store).build(store.calendar[LOOKBACK - 1])
    last = panel.features[0].reshape(LOOKBACK, 6)[-1]
    np.testing.assert_allclose(last, [1.0, 1.0, 1.01, 0.99, 1.0, 1.0])


def test_panel_needs_full_lookback():
    store = ingest_bars(make_bars({'A': linear_closes(LOOKBACK), 'B': linear_closes(LOOKBACK)})).store
    builder = Alpha360Builder(store)
    with pytest.raises(EmptyPanelError):
        builder.build(store.calendar[LOOKBACK - 2])
    with pytest.raises(DataError):
        builder.build(date(1999, 1, 1))
    panel = builder.build(store.calendar[-1])
    assert panel.labels is None


def test_stock_without_next_close_keeps_its_row():
    n = LOOKBACK + 1
    b_closes = linear_closes(n)
    b_closes[-1] = None
    store = ingest_bars(make_bars({'A': linear_closes(n), 'B': b_closes, 'C': linear_closes(n, base=20.0)})).store
    panel = Alpha360Builder(store).build(store.calendar[LOOKBACK - 1])
    # membership must not depend on the next day's bars
    assert panel.stock_ids == ['A', 'B', 'C']
    np.testing.assert_array_equal(panel.labelled, [True, False, True])
    assert np.isfinite(panel.labels).all()

    complete = ingest_bars(make_bars({'A': linear_closes(n), 'B': linear_closes(n),
                                      'C': linear_closes(n, base=20.0)})).store
    reference = Alpha360Builder(complete).build(complete.calendar[LOOKBACK - 1])
    np.testing.assert_array_equal(panel.features, reference.features)


def test_masked_panel_csv_round_trip(tmp_path):
    n = LOOKBACK + 1
    b_closes = linear_closes(n)
    b_closes[-1] = None
    store = ingest_bars(make_bars({'A': linear_closes(n), 'B': b_closes})).store
    panel = Alpha360Builder(store).build(store.calendar[LOOKBACK - 1])
    path = panel.to_csv(tmp_path / f"{panel.date.isoformat()}.csv")
    assert np.isnan(pd.read_csv(path)['label'].iloc[1])
    loaded = FeaturePanel.from_csv(path)
    np.testing.assert_array_equal(loaded.labelled, [True, False])
    assert loaded.labels[0] == panel.labels[0]


def test_stock_with_gap_in_window_is_excluded():
    n = LOOKBACK + 1
    b_closes = linear_closes(n)
    b_closes[10] = None
    store = ingest_bars(make_bars({'A': linear_closes(n), 'B': b_closes})).store
    panel = Alpha360Builder(store).build(store.calendar[LOOKBACK - 1])
    assert panel.stock_ids == ['A']


def test_universe_restricts_panel():
    n = LOOKBACK + 1
    store = ingest_bars(make_bars({'A': linear_closes(n), 'B': linear_closes(n)})).store
    day = store.calendar[LOOKBACK - 1]
    panel = Alpha360Builder(store, Universe({day: ['B']})).build(day)
    assert panel.stock_ids == ['B']


def test_standardized_labels():
    n = LOOKBACK + 1
    store = ingest_bars(make_bars({s: linear_closes(n, base=10 + i, step=0.1 * (i + 1))
                                   for i, s in enumerate('ABCD')})).store
    panel = Alpha360Builder(store, standardize_labels=True).build(store.calendar[LOOKBACK - 1])
    assert panel.labels.mean() == pytest.approx(0.0, abs=1e-12)
    assert panel.labels.std() == pytest.approx(1.0)


def test_standardized_features_are_cross_sectional_z_scores(synthetic_store):
    day = synthetic_store.calendar[LOOKBACK + 3]
    raw = build_alpha360(synthetic_store, None, day)
    scaled = build_alpha360(synthetic_store, None, day, standardize=True)
    assert scaled.stock_ids == raw.stock_ids

    spread = raw.features.std(axis=0)
    varying = spread > 0
    np.testing.assert_allclose(scaled.features.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(scaled.features[:, varying].std(axis=0), 1.0, rtol=1e-9)
    np.testing.assert_array_equal(scaled.features[:, ~varying], 0.0)
    expected = (raw.features[:, varying] - raw.features[:, varying].mean(axis=0)) / spread[varying]
    np.testing.assert_allclose(scaled.features[:, varying], expected, rtol=1e-12, atol=1e-12)


def test_build_panels_follows_data_config(synthetic_store):
    day = synthetic_store.calendar[LOOKBACK + 3]
    plain = build_panels(synthetic_store, None, DataConfig(standardize_features=False))
    scaled = build_panels(synthetic_store, None, DataConfig())
    by_day = {p.date: p for p in plain}
    np.testing.assert_array_equal(by_day[day].features, build_alpha360(synthetic_store, None, day).features)
    assert not np.array_equal(scaled[4].features, plain[4].features)


def test_build_panels_skips_short_history(synthetic_store):
    panels = build_panels(synthetic_store, None, DataConfig())
    assert [p.date for p in panels] == synthetic_store.calendar[LOOKBACK - 1:]
    assert panels[-1].labels is None
    assert all(p.has_labels for p in panels[:-1])


def test_panel_csv_round_trip(tmp_path, synthetic_store):
    panel = Alpha360Builder(synthetic_store).build(synthetic_store.calendar[LOOKBACK])
    path = panel.to_csv(tmp_path / f"{panel.date.isoformat()}.csv")
    loaded = FeaturePanel.from_csv(path)
    assert loaded.date == panel.date
    assert loaded.stock_ids == panel.stock_ids
    np.testing.assert_array_equal(loaded.features, panel.features)
    np.testing.assert_array_equal(loaded.labels, panel.labels)


def test_split_dataset(synthetic_store):
    panels = build_panels(synthetic_store, None, DataConfig())
    cal = [p.date for p in panels]
    train, valid, test = split_dataset(panels, (cal[0], cal[9]), (cal[10], cal[14]), (cal[15], cal[-1]))
    assert len(train) == 10 and len(valid) == 5 and len(test) == len(cal) - 15
    _, empty_valid, _ = split_dataset(panels, (cal[0], cal[9]), None, None)
    assert empty_valid == []

    with pytest.raises(ConfigurationError):
        split_dataset(panels, (cal[0], cal[9]), (cal[9], cal[12]), None)
    with pytest.raises(ConfigurationError):
        split_dataset(panels, (cal[10], cal[12]), (cal[0], cal[5]), None)
