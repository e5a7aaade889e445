#!/usr/bin/env python3
"""
Day-recursive training loop

Each epoch starts from a cold state and walks the training panels in date
order. Gradients are truncated every ``bptt_window`` days: the window's loss
is backpropagated, gradients are clipped to ``grad_clip_norm`` and one Adam
step is taken, after which the carried state is detached.
"""

import copy
import math
import time
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from loguru import logger

from .checkpoint import save_checkpoint
from .config import Constants, TrainingConfig
from .errors import DivergenceError, TrainingDataError, UsageError
from .evaluation import mean_ic
from .market_data import FeaturePanel
from .model_core import DTYPE, DayState, ReturnVector, TopicExpectationModel, loss
from .utils import seed_everything, write_csv


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_ic: float
    seconds: float
    checkpoint: str = ''


@dataclass
class TrainingRunRecord:
    """Per-epoch history of a training run."""

    seed: int
    config: Dict[str, Any]
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    checkpoint_path: Optional[Path] = None

    @property
    def best_valid_ic(self) -> float:
        if self.best_epoch is None:
            return math.nan
        return self.epochs[self.best_epoch - 1].valid_ic

    def to_frame(self) -> pd.DataFrame:
        rows = [(e.epoch, e.train_loss, e.valid_ic, e.seconds, e.checkpoint) for e in self.epochs]
        return pd.DataFrame(rows, columns=Constants.RECORD_COLUMNS)

    def to_csv(self, file_path: Union[str, Path]) -> Path:
        return write_csv(self.to_frame(), file_path)


def build_model(config: TrainingConfig, d_feat: int = Constants.FEATURE_DIM) -> TopicExpectationModel:
    return TopicExpectationModel(d_feat=d_feat, hidden_size=config.embedding_size, dropout=config.dropout,
                                 topics_reinit_daily=config.topics_reinit_daily,
                                 separate_head_weights=config.separate_head_weights,
                                 plain_lstm=config.plain_lstm)


def _check_chronological(panels: Sequence[FeaturePanel], what: str) -> None:
    for prev, cur in zip(panels, panels[1:]):
        if cur.date <= prev.date:
            raise TrainingDataError(f"{what} panels must have strictly increasing dates ({prev.date} then {cur.date})")


def _labels(panel: FeaturePanel) -> ReturnVector:
    mask = None if panel.labelled.all() else panel.labelled
    return ReturnVector(panel.date, list(panel.stock_ids), torch.as_tensor(panel.labels, dtype=DTYPE), mask)


def _labelled_count(actual: ReturnVector) -> int:
    return len(actual.stock_ids) if actual.mask is None else int(np.count_nonzero(actual.mask))


def predict(model: TopicExpectationModel, panels: Sequence[FeaturePanel],
            warmup: Sequence[FeaturePanel] = (), calendar: Optional[Sequence[date]] = None) -> List[ReturnVector]:
    """
    Roll the state through ``warmup`` and emit a prediction for every panel.

    Labels are never read.

    Args:
        model: Trained model
        panels: Prediction panels in date order
        warmup: Panels preceding ``panels``; empty means a cold start
        calendar: Trading calendar used to detect a gap after the warmup

    Returns:
        List[ReturnVector]: One prediction vector per panel

    Raises:
        UsageError: If the warmup does not precede the prediction panels
    """
    _check_chronological(list(warmup), 'Warmup')
    _check_chronological(list(panels), 'Prediction')
    if warmup and panels:
        last_warm, first_pred = warmup[-1].date, panels[0].date
        if last_warm >= first_pred:
            raise UsageError(f"Warmup ends at {last_warm}, not before the first prediction date {first_pred}")
        if calendar is not None:
            skipped = [d for d in calendar if last_warm < d < first_pred]
            if skipped:
                logger.warning(f"{len(skipped)} trading day(s) between warmup end {last_warm} and "
                               f"{first_pred}; carried state may be stale")

    was_training = model.training
    model.eval()
    outputs: List[ReturnVector] = []
    state: Optional[DayState] = None
    with torch.no_grad():
        for panel in warmup:
            _, _, state = model.step(panel.features, panel.stock_ids, state, day=panel.date)
        for panel in panels:
            r_hat, _, state = model.step(panel.features, panel.stock_ids, state, day=panel.date)
            outputs.append(ReturnVector(panel.date, list(panel.stock_ids), r_hat.detach().clone()))
    model.train(was_training)
    return outputs


def predictions_frame(predictions: Sequence[ReturnVector]) -> pd.DataFrame:
    rows = [(p.date.isoformat(), s, float(v)) for p in predictions for s, v in zip(p.stock_ids, p.numpy())]
    return pd.DataFrame(rows, columns=Constants.PREDICTION_COLUMNS)


def predictions_from_frame(frame: pd.DataFrame) -> List[ReturnVector]:
    """Inverse of :func:`predictions_frame`; rows are grouped by date in date order."""
    frame = frame.copy()
    frame['date'] = pd.to_datetime(frame['date'], format='%Y-%m-%d').dt.date
    return [ReturnVector(day, group['stock_id'].astype(str).tolist(), group['prediction'].to_numpy(dtype=float))
            for day, group in frame.groupby('date', sort=True)]


class Trainer:
    """Owns the model and optimizer of one training run."""

    def __init__(self, config: TrainingConfig, model: Optional[TopicExpectationModel] = None):
        self.config = config
        seed_everything(config.seed)
        self.model = model if model is not None else build_model(config)
        # Adam defaults: betas (0.9, 0.999), eps 1e-8
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.learning_rate)
        self.last_predictions: List[ReturnVector] = []

    def _step_window(self, predicted: List[ReturnVector], actual: List[ReturnVector]) -> float:
        window_loss = loss(predicted, actual)
        if not math.isfinite(float(window_loss)):
            offending = predicted[-1].date
            for p, a in zip(predicted, actual):
                if not bool(torch.isfinite(p.values).all()) or not bool(torch.isfinite(a.values).all()):
                    offending = p.date
                    break
            raise DivergenceError(offending, float(window_loss))
        self.optimizer.zero_grad()
        window_loss.backward()
        torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.config.grad_clip_norm)
        self.optimizer.step()
        return float(window_loss.detach())

    def run_epoch(self, panels: Sequence[FeaturePanel]) -> float:
        """
        One pass over the training panels.

        Returns:
            float: Sum of squared residuals over the epoch divided by the
                number of labelled stock-days

        Raises:
            TrainingDataError: On an empty sequence, unordered dates or a
                panel without labels
            DivergenceError: If a window's loss is not finite
        """
        if not panels:
            raise TrainingDataError("No training panels")
        _check_chronological(list(panels), 'Training')
        for panel in panels:
            if not panel.has_labels:
                raise TrainingDataError(f"Panel {panel.date} has no labels")

        self.model.train()
        window = self.config.bptt_window
        state: Optional[DayState] = None
        predicted: List[ReturnVector] = []
        actual: List[ReturnVector] = []
        self.last_predictions = []
        total, count = 0.0, 0

        for i, panel in enumerate(panels):
            r_hat, _, state = self.model.step(panel.features, panel.stock_ids, state, day=panel.date)
            predicted.append(ReturnVector(panel.date, list(panel.stock_ids), r_hat))
            actual.append(_labels(panel))
            self.last_predictions.append(ReturnVector(panel.date, list(panel.stock_ids), r_hat.detach().clone()))

            if len(predicted) == window or i == len(panels) - 1:
                n_window = sum(_labelled_count(a) for a in actual)
                if n_window:
                    total += self._step_window(predicted, actual) * n_window
                    count += n_window
                predicted, actual = [], []
                state = state.detach()

        if not count:
            raise TrainingDataError(f"No labelled stock-days between {panels[0].date} and {panels[-1].date}")
        return total / count

    def validation_ic(self, train_panels: Sequence[FeaturePanel], valid_panels: Sequence[FeaturePanel],
                      calendar: Optional[Sequence[date]] = None) -> float:
        if not valid_panels:
            return math.nan
        predicted = predict(self.model, valid_panels, warmup=train_panels, calendar=calendar)
        return mean_ic(predicted, [_labels(p) for p in valid_panels])

    def fit(self, train_panels: Sequence[FeaturePanel], valid_panels: Sequence[FeaturePanel] = (),
            checkpoint_path: Optional[Path] = None,
            calendar: Optional[Sequence[date]] = None) -> Tuple[TopicExpectationModel, TrainingRunRecord]:
        """
        Train for ``config.epochs`` epochs and keep the weights with the best validation IC.

        Without a usable validation IC the final epoch's weights are kept.

        Args:
            train_panels: Labelled training panels in date order
            valid_panels: Labelled validation panels after the training panels
            checkpoint_path: Where to write the selected checkpoint, if anywhere
            calendar: Trading calendar for gap warnings

        Returns:
            The model holding the selected weights and the run record
        """
        for panel in valid_panels:
            if not panel.has_labels:
                raise TrainingDataError(f"Validation panel {panel.date} has no labels")
        if train_panels and valid_panels and valid_panels[0].date <= train_panels[-1].date:
            raise TrainingDataError("Validation panels must come after the training panels")

        seed_everything(self.config.seed)
        n_stocks = len({s for p in train_panels for s in p.stock_ids})
        record = TrainingRunRecord(seed=self.config.seed, config=self.config.model_dump(mode='json'),
                                   checkpoint_path=checkpoint_path)
        best_ic = -math.inf
        best_state: Optional[Dict[str, torch.Tensor]] = None

        for epoch in range(1, self.config.epochs + 1):
            t0 = time.perf_counter()
            train_loss = self.run_epoch(train_panels)
            valid_ic = self.validation_ic(train_panels, valid_panels, calendar)
            entry = EpochRecord(epoch, train_loss, valid_ic, round(time.perf_counter() - t0, 3))
            if math.isfinite(valid_ic) and valid_ic > best_ic:
                best_ic, best_state = valid_ic, copy.deepcopy(self.model.state_dict())
                record.best_epoch = epoch
                if checkpoint_path is not None:
                    save_checkpoint(self.model, checkpoint_path, n_stocks, self.config.seed)
                    entry.checkpoint = str(checkpoint_path)
            record.epochs.append(entry)
            logger.info(f"Epoch {epoch}/{self.config.epochs}: loss={train_loss:.6g} valid_ic={valid_ic:.4f}")

        if best_state is None:
            logger.warning("No usable validation IC; keeping the final epoch's weights")
            record.best_epoch = self.config.epochs
            if checkpoint_path is not None:
                save_checkpoint(self.model, checkpoint_path, n_stocks, self.config.seed)
                record.epochs[-1].checkpoint = str(checkpoint_path)
        else:
            self.model.load_state_dict(best_state)

        self.model.eval()
        return self.model, record


def run_epoch(model: TopicExpectationModel, panels: Sequence[FeaturePanel],
              config: TrainingConfig) -> Tuple[TopicExpectationModel, float]:
    """Functional wrapper: one epoch with a fresh optimizer."""
    trainer = Trainer(config, model)
    epoch_loss = trainer.run_epoch(panels)
    return trainer.model, epoch_loss


def fit(train_panels: Sequence[FeaturePanel], valid_panels: Sequence[FeaturePanel], config: TrainingConfig,
        checkpoint_path: Optional[Path] = None,
        calendar: Optional[Sequence[date]] = None) -> Tuple[TopicExpectationModel, TrainingRunRecord]:
    return Trainer(config).fit(train_panels, valid_panels, checkpoint_path, calendar)
