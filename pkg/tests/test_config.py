from datetime import date

import pytest
from pydantic import ValidationError

from libs.config import (BacktestConfig, DataConfig, TrainingConfig, load_config_file, parse_date_range,
                         resolve_config)
from libs.errors import ConfigurationError


def test_training_defaults():
    cfg = TrainingConfig()
    assert cfg.learning_rate == 0.001
    assert cfg.epochs == 300
    assert cfg.dropout == 0.1
    assert cfg.embedding_size == 128
    assert cfg.bptt_window == 60
    assert cfg.grad_clip_norm == 5.0
    assert not cfg.topics_reinit_daily and not cfg.separate_head_weights and not cfg.plain_lstm


@pytest.mark.parametrize('field,value', [
    ('learning_rate', 0.0),
    ('epochs', 0),
    ('dropout', 1.0),
    ('bptt_window', 0),
])
def test_training_rejects_out_of_range(field, value):
    with pytest.raises(ValidationError):
        TrainingConfig(**{field: value})


def test_unknown_field_is_rejected():
    with pytest.raises(ValidationError):
        TrainingConfig(learning_rat=0.01)


def test_backtest_counts():
    assert BacktestConfig().topk == 50 and BacktestConfig().n_drop == 5
    with pytest.raises(ValidationError):
        BacktestConfig(topk=3, n_drop=4)
    with pytest.raises(ValidationError):
        BacktestConfig(benchmark='index')


def test_parse_date_range():
    assert parse_date_range('2020-01-02:2020-03-04') == (date(2020, 1, 2), date(2020, 3, 4))
    assert parse_date_range(['2020-01-02', '2020-03-04']) == (date(2020, 1, 2), date(2020, 3, 4))
    assert parse_date_range('') is None
    with pytest.raises(ValueError):
        parse_date_range('2020-03-04:2020-01-02')


def test_config_file_and_precedence(tmp_path):
    path = tmp_path / 'run.cfg'
    path.write_text("# training\nepochs = 5\nlearning_rate=0.01\n\ntopk = 7  # holdings\n"
                    "train_range = 2020-01-01:2020-06-30\n")
    values = load_config_file(path)

    cfg = resolve_config(TrainingConfig, values, {'epochs': 9, 'dropout': None})
    assert cfg.epochs == 9
    assert cfg.learning_rate == 0.01
    assert cfg.dropout == 0.1

    assert resolve_config(BacktestConfig, values).topk == 7
    assert resolve_config(DataConfig, values).train_range == (date(2020, 1, 1), date(2020, 6, 30))


def test_config_file_unknown_key(tmp_path):
    path = tmp_path / 'run.cfg'
    path.write_text("epochs = 5\nwarp_speed = 9\n")
    with pytest.raises(ConfigurationError, match='warp_speed'):
        load_config_file(path)


def test_config_file_duplicate_and_malformed(tmp_path):
    dup = tmp_path / 'dup.cfg'
    dup.write_text("epochs = 5\nepochs = 6\n")
    with pytest.raises(ConfigurationError, match='duplicate'):
        load_config_file(dup)
    bad = tmp_path / 'bad.cfg'
    bad.write_text("epochs 5\n")
    with pytest.raises(ConfigurationError):
        load_config_file(bad)


def test_resolve_config_wraps_validation_errors():
    with pytest.raises(ConfigurationError) as excinfo:
        resolve_config(TrainingConfig, {'learning_rate': '-1'})
    assert excinfo.value.exit_code == 2
