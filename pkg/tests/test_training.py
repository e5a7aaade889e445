import copy

import numpy as np
import pytest
import torch

from conftest import random_panels
from libs.config import DataConfig, TrainingConfig
from libs.errors import DivergenceError, TrainingDataError, UsageError
from libs.market_data import build_panels, ingest_bars, split_dataset
from libs.model_core import DTYPE, ReturnVector, loss
from libs.synthetic import PlantedSignal, generate_bars
from libs.training import Trainer, predict, predictions_frame, predictions_from_frame
from libs.training import fit as training_fit
from libs.training import run_epoch as training_run_epoch


def params_of(model):
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def test_zero_learning_rate_keeps_parameters(tiny_config, stock_ids):
    config = tiny_config.model_copy(update={'learning_rate': 0.0})
    trainer = Trainer(config)
    before = params_of(trainer.model)
    epoch_loss = trainer.run_epoch(random_panels(12, stock_ids))
    assert np.isfinite(epoch_loss)
    for name, value in trainer.model.state_dict().items():
        assert torch.equal(value, before[name])


def test_single_day_loss_matches_model_loss(tiny_config):
    panel = random_panels(1, ['A', 'B'])[0]
    trainer = Trainer(tiny_config)
    reference = copy.deepcopy(trainer.model)
    r_hat, _, _ = reference.step(panel.features, panel.stock_ids, day=panel.date)
    expected = loss([ReturnVector(panel.date, panel.stock_ids, r_hat)],
                    [ReturnVector(panel.date, panel.stock_ids, torch.as_tensor(panel.labels, dtype=DTYPE))])
    assert trainer.run_epoch([panel]) == pytest.approx(float(expected), rel=1e-12)


def test_zero_gradient_step_keeps_parameters(tiny_config):
    trainer = Trainer(tiny_config)
    before = params_of(trainer.model)
    for param in trainer.model.parameters():
        param.grad = torch.zeros_like(param)
    trainer.optimizer.step()
    for name, value in trainer.model.state_dict().items():
        assert torch.equal(value, before[name])


def test_panel_without_labels_is_rejected(tiny_config, stock_ids):
    panels = random_panels(3, stock_ids)
    panels[1].labels = None
    with pytest.raises(TrainingDataError, match=str(panels[1].date)):
        Trainer(tiny_config).run_epoch(panels)


def test_unordered_panels_are_rejected(tiny_config, stock_ids):
    panels = random_panels(3, stock_ids)
    with pytest.raises(TrainingDataError):
        Trainer(tiny_config).run_epoch(panels[::-1])
    with pytest.raises(TrainingDataError):
        Trainer(tiny_config).run_epoch([])


def test_non_finite_loss_reports_date(tiny_config, stock_ids):
    panels = random_panels(8, stock_ids)
    panels[6].labels = panels[6].labels.copy()
    panels[6].labels[0] = np.inf
    with pytest.raises(DivergenceError) as excinfo:
        Trainer(tiny_config).run_epoch(panels)
    assert excinfo.value.date == panels[6].date
    assert excinfo.value.exit_code == 4


def test_single_epoch_record(tiny_config, stock_ids, tmp_path):
    config = tiny_config.model_copy(update={'epochs': 1})
    panels = random_panels(15, stock_ids)
    model, record = Trainer(config).fit(panels[:10], panels[10:], checkpoint_path=tmp_path / 'model.ckpt')
    assert len(record.epochs) == 1
    assert record.best_epoch == 1
    assert (tmp_path / 'model.ckpt').exists()
    frame = record.to_frame()
    assert list(frame.columns) == ['epoch', 'train_loss', 'valid_ic', 'seconds', 'checkpoint']
    assert np.isfinite(frame['train_loss']).all()


def test_empty_validation_falls_back_to_final_epoch(tiny_config, stock_ids, tmp_path):
    model, record = Trainer(tiny_config).fit(random_panels(10, stock_ids), [],
                                             checkpoint_path=tmp_path / 'model.ckpt')
    assert record.best_epoch == tiny_config.epochs
    assert [e.epoch for e in record.epochs] == [1, 2]
    assert record.epochs[-1].checkpoint == str(tmp_path / 'model.ckpt')


def test_fit_is_deterministic(tiny_config, stock_ids, tmp_path):
    panels = random_panels(14, stock_ids)
    config = tiny_config.model_copy(update={'dropout': 0.2})
    Trainer(config).fit(panels[:10], panels[10:], checkpoint_path=tmp_path / 'a.ckpt')
    Trainer(config).fit(panels[:10], panels[10:], checkpoint_path=tmp_path / 'b.ckpt')
    assert (tmp_path / 'a.ckpt').read_bytes() == (tmp_path / 'b.ckpt').read_bytes()


def test_validation_must_follow_training(tiny_config, stock_ids):
    panels = random_panels(6, stock_ids)
    with pytest.raises(TrainingDataError):
        Trainer(tiny_config).fit(panels[3:], panels[:3])


def test_predict_reproduces_training_pass(tiny_config, stock_ids):
    config = tiny_config.model_copy(update={'learning_rate': 0.0})
    panels = random_panels(9, stock_ids)
    trainer = Trainer(config)
    trainer.run_epoch(panels)
    predicted = predict(trainer.model, panels)
    for trained, served in zip(trainer.last_predictions, predicted):
        torch.testing.assert_close(served.values, trained.values, rtol=0, atol=1e-12)


def test_predict_has_no_lookahead(tiny_config, stock_ids):
    model = Trainer(tiny_config).model
    panels = random_panels(6, stock_ids, labels=False)
    baseline = predict(model, panels)

    perturbed = copy.deepcopy(panels)
    perturbed[4].features = perturbed[4].features + 3.0
    perturbed[5].features = -perturbed[5].features
    changed = predict(model, perturbed)
    for i in range(4):
        assert torch.equal(baseline[i].values, changed[i].values)
    assert not torch.equal(baseline[4].values, changed[4].values)


def test_predict_warmup(tiny_config, stock_ids):
    model = Trainer(tiny_config).model
    panels = random_panels(6, stock_ids, labels=False)
    rolled = predict(model, panels)
    warmed = predict(model, panels[4:], warmup=panels[:4])
    torch.testing.assert_close(warmed[0].values, rolled[4].values, rtol=0, atol=0)

    cold = predict(model, panels[4:])
    assert not torch.equal(cold[0].values, rolled[4].values)

    with pytest.raises(UsageError):
        predict(model, panels[:2], warmup=panels[3:])


def test_predict_warns_on_gap(tiny_config, stock_ids):
    from loguru import logger

    messages = []
    sink = logger.add(lambda m: messages.append(str(m)), level='WARNING')
    try:
        model = Trainer(tiny_config).model
        panels = random_panels(6, stock_ids, labels=False)
        predict(model, panels[4:], warmup=panels[:2], calendar=[p.date for p in panels])
    finally:
        logger.remove(sink)
    assert any('stale' in m for m in messages)


def test_predictions_frame_round_trip(tiny_config, stock_ids):
    model = Trainer(tiny_config).model
    predicted = predict(model, random_panels(3, stock_ids, labels=False))
    restored = predictions_from_frame(predictions_frame(predicted).astype({'prediction': float}))
    assert [p.date for p in restored] == [p.date for p in predicted]
    np.testing.assert_array_equal(restored[0].numpy(), predicted[0].numpy())


@pytest.mark.slow
def test_training_reduces_loss_on_planted_signal():
    bars = generate_bars(8, 130, seed=5, signal=PlantedSignal(strength=1.0, noise=0.002))
    store = ingest_bars(bars).store
    panels = build_panels(store, None, DataConfig())
    cal = [p.date for p in panels]
    train, _, _ = split_dataset(panels, (cal[0], cal[50]), None, None)

    config = TrainingConfig(embedding_size=16, dropout=0.0, bptt_window=20, learning_rate=0.005, seed=1)
    trainer = Trainer(config)
    first = trainer.run_epoch(train)
    for _ in range(48):
        trainer.run_epoch(train)
    last = trainer.run_epoch(train)
    assert last < first


@pytest.mark.slow
def test_planted_signal_is_recovered_and_beats_plain_lstm():
    store = ingest_bars(generate_bars(20, 400, seed=0)).store
    panels = build_panels(store, None, DataConfig())
    train, valid = panels[:240], panels[240:-1]
    config = TrainingConfig(embedding_size=16, epochs=20, dropout=0.0, bptt_window=10, learning_rate=0.005, seed=0)

    _, full = Trainer(config).fit(train, valid)
    _, plain = Trainer(config.model_copy(update={'plain_lstm': True})).fit(train, valid)
    assert full.best_valid_ic > 0.3
    assert full.best_valid_ic > plain.best_valid_ic


def test_masked_labels_do_not_enter_the_loss(tiny_config, stock_ids):
    panels = random_panels(4, stock_ids)
    masked = copy.deepcopy(panels)
    for panel in masked:
        panel.labels = panel.labels.copy()
        panel.labels[0] = 0.0
        panel.label_mask = np.arange(panel.n) != 0
    untouched = copy.deepcopy(masked)
    for panel in untouched:
        panel.labels[0] = 5.0

    config = tiny_config.model_copy(update={'learning_rate': 0.0})
    assert Trainer(config).run_epoch(masked) == pytest.approx(Trainer(config).run_epoch(untouched), rel=1e-12)

    reference = Trainer(config)
    full = reference.run_epoch(panels)
    assert full != pytest.approx(Trainer(config).run_epoch(masked), rel=1e-6)


def test_functional_wrappers_match_trainer(tiny_config, stock_ids, tmp_path):
    panels = random_panels(12, stock_ids)
    model, epoch_loss = training_run_epoch(Trainer(tiny_config).model, panels, tiny_config)
    assert epoch_loss == pytest.approx(Trainer(tiny_config).run_epoch(panels), rel=1e-12)
    assert isinstance(model, torch.nn.Module)

    _, record = training_fit(panels[:9], panels[9:], tiny_config, checkpoint_path=tmp_path / 'a.ckpt')
    Trainer(tiny_config).fit(panels[:9], panels[9:], checkpoint_path=tmp_path / 'b.ckpt')
    assert len(record.epochs) == tiny_config.epochs
    assert (tmp_path / 'a.ckpt').read_bytes() == (tmp_path / 'b.ckpt').read_bytes()
