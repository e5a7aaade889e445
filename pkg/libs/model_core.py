#!/usr/bin/env python3
"""
Differentiable topic/expectation return model

One forward step per trading day:

1. an LSTM cell turns the day's Alpha360 rows into stock embeddings S;
2. every stock is assigned its most Tanimoto-similar topic other than its
   own, the assigned ("valid") topics are refreshed from their stocks;
3. the expectation state attends over the valid topics and is advanced by a
   second LSTM cell;
4. stock, topic and expectation heads are combined into a tanh-bounded
   one-day return prediction.

Topic rows outside the valid set are never read by the attention steps.
All tensors are float64 on CPU.
"""

import math
from dataclasses import dataclass
from datetime import date
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import Constants
from .errors import AlignmentError, ConfigurationError, DataError, DegenerateSimilarityError

DTYPE = torch.float64

ArrayLike = Union[np.ndarray, torch.Tensor, Sequence[float]]


class RecurrentState(NamedTuple):
    """Hidden and cell tensors of an LSTM cell, one row per stock."""

    h: torch.Tensor
    c: torch.Tensor

    def detach(self) -> 'RecurrentState':
        return RecurrentState(self.h.detach(), self.c.detach())


class HeadOutputs(NamedTuple):
    r_stock: torch.Tensor
    r_topic: Optional[torch.Tensor]
    r_expectation: Optional[torch.Tensor]
    # |valid| x n attention of each stock over the valid topics
    topic_weights: Optional[torch.Tensor] = None


@dataclass
class ReturnVector:
    """Returns of n stocks on one date (predicted or realized)."""

    date: date
    stock_ids: List[str]
    values: Union[np.ndarray, torch.Tensor]
    # False where a realized return is missing; None means every value counts
    mask: Optional[np.ndarray] = None

    def numpy(self) -> np.ndarray:
        if isinstance(self.values, torch.Tensor):
            return self.values.detach().cpu().numpy()
        return np.asarray(self.values, dtype=np.float64)


@dataclass
class DayState:
    """Recurrent, topic and expectation state carried from one day to the next."""

    date: Optional[date]
    stock_ids: List[str]
    encoder: RecurrentState
    S: torch.Tensor
    T: torch.Tensor
    valid: torch.Tensor
    E: torch.Tensor
    expectation_cell: torch.Tensor

    def detach(self) -> 'DayState':
        return DayState(
            date=self.date,
            stock_ids=list(self.stock_ids),
            encoder=self.encoder.detach(),
            S=self.S.detach(),
            T=self.T.detach(),
            valid=self.valid,
            E=self.E.detach(),
            expectation_cell=self.expectation_cell.detach(),
        )


class TopicExpectationModel(nn.Module):
    """All learnable weights of the return model."""

    def __init__(self, d_feat: int = Constants.FEATURE_DIM, hidden_size: int = 128, dropout: float = 0.1,
                 topics_reinit_daily: bool = False, separate_head_weights: bool = False,
                 plain_lstm: bool = False):
        super().__init__()
        self.d_feat = d_feat
        self.hidden_size = hidden_size
        self.topics_reinit_daily = topics_reinit_daily
        self.separate_head_weights = separate_head_weights
        self.plain_lstm = plain_lstm

        self.encoder = nn.LSTMCell(d_feat, hidden_size)
        self.head_stock = nn.Linear(hidden_size, 1)
        if not plain_lstm:
            self.expectation_lstm = nn.LSTMCell(hidden_size, hidden_size)
            # W_t, b_t
            self.topic_update = nn.Linear(hidden_size, hidden_size)
            # W1_e (no bias) and W2_e, b_e
            self.expectation_self = nn.Linear(hidden_size, hidden_size, bias=False)
            self.expectation_topic = nn.Linear(hidden_size, hidden_size)
            self.head_expectation = nn.Linear(hidden_size, 1)
            # W_s, b_s
            self.topic_readout = nn.Linear(hidden_size, hidden_size)
            self.head_topic = nn.Linear(hidden_size, 1)
        self.combiner = nn.Linear(3 if separate_head_weights and not plain_lstm else 1, 1)
        self.dropout = nn.Dropout(dropout)

        self.reset_parameters()
        self.to(DTYPE)

    def reset_parameters(self) -> None:
        """Weights uniform in [-1/sqrt(d), 1/sqrt(d)], biases zero."""
        bound = 1.0 / math.sqrt(self.hidden_size)
        for name, param in self.named_parameters():
            if name.rsplit('.', 1)[-1].startswith('bias'):
                nn.init.zeros_(param)
            else:
                nn.init.uniform_(param, -bound, bound)

    def combine(self, heads: HeadOutputs) -> torch.Tensor:
        weight, bias = self.combiner.weight, self.combiner.bias
        if self.plain_lstm:
            return torch.tanh(weight[0, 0] * heads.r_stock + bias[0])
        if self.separate_head_weights:
            stacked = torch.stack([heads.r_stock, heads.r_topic, heads.r_expectation], dim=-1)
            return torch.tanh(F.linear(stacked, weight, bias).squeeze(-1))
        w = weight[0, 0]
        return torch.tanh(w * heads.r_stock + w * heads.r_topic + w * heads.r_expectation + bias[0])

    def step(self, features: ArrayLike, stock_ids: Sequence[str], state: Optional[DayState] = None,
             day: Optional[date] = None) -> Tuple[torch.Tensor, HeadOutputs, DayState]:
        """
        Run one trading day.

        Args:
            features: n x d_feat Alpha360 rows
            stock_ids: Identifiers of the n rows
            state: State after the previous day; ``None`` starts cold
            day: Date of the panel (carried into the new state)

        Returns:
            Predicted returns (n,), head components, and the new state
        """
        stock_ids = list(stock_ids)
        x = torch.as_tensor(np.asarray(features) if not isinstance(features, torch.Tensor) else features,
                            dtype=DTYPE)
        n, d = len(stock_ids), self.hidden_size
        zeros = torch.zeros(n, d, dtype=DTYPE)

        if state is None:
            encoder_state = RecurrentState(zeros, zeros)
        else:
            encoder_state = RecurrentState(align_rows(state.encoder.h, state.stock_ids, stock_ids, zeros),
                                           align_rows(state.encoder.c, state.stock_ids, stock_ids, zeros))

        S, encoder_next = encode_temporal(self, x, encoder_state)

        if self.plain_lstm:
            heads = HeadOutputs(torch.tanh(self.head_stock(self.dropout(S))).squeeze(-1), None, None)
            everyone = torch.arange(n)
            new_state = DayState(day, stock_ids, encoder_next, S, S, everyone, S, zeros)
            return self.combine(heads), heads, new_state

        if state is None:
            T, E_prev, cell = S, S, zeros
        else:
            T = S if self.topics_reinit_daily else align_rows(state.T, state.stock_ids, stock_ids, S)
            E_prev = align_rows(state.E, state.stock_ids, stock_ids, S)
            cell = align_rows(state.expectation_cell, state.stock_ids, stock_ids, zeros)

        phi = assign_topics(T, S)
        valid = valid_topics(phi)
        T_new = update_topics(self, T, S, phi, valid)
        E_hat = expectation_attention(self, T_new, E_prev, valid)
        E, expectation_next = advance_expectation(self, E_hat, RecurrentState(E_prev, cell))
        r_hat, heads = predict_returns(self, S, T_new, E, valid)

        new_state = DayState(day, stock_ids, encoder_next, S, T_new, valid, E, expectation_next.c)
        return r_hat, heads, new_state


def align_rows(rows: torch.Tensor, prev_ids: Sequence[str], new_ids: Sequence[str],
               fill: torch.Tensor) -> torch.Tensor:
    """
    Reorder state rows from ``prev_ids`` to ``new_ids``.

    Stocks absent from ``prev_ids`` take the matching row of ``fill``.
    """
    if list(prev_ids) == list(new_ids):
        return rows
    position = {s: i for i, s in enumerate(prev_ids)}
    idx = torch.tensor([position.get(s, -1) for s in new_ids], dtype=torch.long)
    known = idx >= 0
    if len(prev_ids) == 0:
        return fill
    gathered = rows.index_select(0, idx.clamp(min=0))
    return torch.where(known[:, None], gathered, fill)


def encode_temporal(model: TopicExpectationModel, features: torch.Tensor,
                    encoder_state: Optional[RecurrentState] = None) -> Tuple[torch.Tensor, RecurrentState]:
    """
    One encoder LSTM step over a day's feature rows.

    Raises:
        DataError: If a feature row is not finite
    """
    finite = torch.isfinite(features).all(dim=1)
    if not bool(finite.all()):
        bad = int(torch.nonzero(~finite)[0, 0])
        raise DataError(f"Non-finite features for stock index {bad}")
    hx = None if encoder_state is None else (encoder_state.h, encoder_state.c)
    h, c = model.encoder(features, hx)
    return h, RecurrentState(h, c)


def _as_vector(x: ArrayLike) -> torch.Tensor:
    return x.to(DTYPE) if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x, dtype=np.float64))


def tanimoto(a: ArrayLike, b: ArrayLike) -> torch.Tensor:
    """
    Tanimoto coefficient (a.b) / (|a|^2 + |b|^2 - a.b) of two vectors.

    Raises:
        DegenerateSimilarityError: If both vectors are zero
    """
    a, b = _as_vector(a), _as_vector(b)
    dot = torch.dot(a, b)
    denom = torch.dot(a, a) + torch.dot(b, b) - dot
    if float(denom) == 0.0:
        raise DegenerateSimilarityError("Tanimoto similarity of two zero vectors is undefined")
    return dot / denom


def tanimoto_matrix(A: torch.Tensor, B: torch.Tensor) -> torch.Tensor:
    """
    Pairwise Tanimoto similarity: entry [i, j] compares A[i] with B[j].

    Pairs of zero vectors get similarity 0.
    """
    dot = A @ B.T
    denom = (A * A).sum(dim=1, keepdim=True) + (B * B).sum(dim=1)[None, :] - dot
    positive = denom > 0
    safe = torch.where(positive, denom, torch.ones_like(denom))
    return torch.where(positive, dot / safe, torch.zeros_like(dot))


def tanimoto_rows(A: torch.Tensor, B: torch.Tensor) -> torch.Tensor:
    """Row-wise Tanimoto similarity of A[i] and B[i]; zero pairs give 0."""
    dot = (A * B).sum(dim=1)
    denom = (A * A).sum(dim=1) + (B * B).sum(dim=1) - dot
    positive = denom > 0
    safe = torch.where(positive, denom, torch.ones_like(denom))
    return torch.where(positive, dot / safe, torch.zeros_like(dot))


def assign_topics(T: torch.Tensor, S: torch.Tensor) -> torch.Tensor:
    """
    Most similar topic of each stock, excluding the stock's own topic.

    Ties go to the lowest topic index.

    Returns:
        torch.Tensor: phi, a LongTensor of length n (phi[j2] = j1)

    Raises:
        ConfigurationError: If fewer than two stocks are present
    """
    n = S.shape[0]
    if n < 2:
        raise ConfigurationError(f"Topic assignment needs at least 2 stocks, got {n}")
    with torch.no_grad():
        sim = tanimoto_matrix(T, S)
        sim.fill_diagonal_(-math.inf)
        return sim.argmax(dim=0)


def valid_topics(phi: torch.Tensor) -> torch.Tensor:
    """Sorted indices of topics chosen by at least one stock."""
    return torch.unique(phi, sorted=True)


def update_topics(model: TopicExpectationModel, T: torch.Tensor, S: torch.Tensor, phi: torch.Tensor,
                  valid: torch.Tensor) -> torch.Tensor:
    """
    Refresh valid topics from the stocks assigned to them; other rows are kept.
    """
    assert valid.numel() > 0, "valid topic set is empty"
    weights = tanimoto_rows(T.index_select(0, phi), S)
    aggregated = torch.zeros_like(S).index_add(0, phi, weights[:, None] * S)
    refreshed = torch.tanh(model.topic_update(aggregated.index_select(0, valid)))
    mask = torch.zeros(T.shape[0], dtype=torch.bool)
    mask[valid] = True
    scattered = torch.zeros_like(T).index_copy(0, valid, refreshed)
    return torch.where(mask[:, None], scattered, T)


def topic_attention(T: torch.Tensor, X: torch.Tensor, valid: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Softmax attention of every row of X over the valid topics.

    Returns:
        weights (|valid| x n, columns sum to 1) and the attended topics (n x d)
    """
    topics = T.index_select(0, valid)
    weights = torch.softmax(tanimoto_matrix(topics, X), dim=0)
    return weights, weights.T @ topics


def expectation_attention(model: TopicExpectationModel, T: torch.Tensor, E_prev: torch.Tensor,
                          valid: torch.Tensor) -> torch.Tensor:
    _, attended = topic_attention(T, E_prev, valid)
    return torch.tanh(model.expectation_self(E_prev) + model.expectation_topic(attended))


def advance_expectation(model: TopicExpectationModel, E_hat: torch.Tensor,
                        expectation_state: RecurrentState) -> Tuple[torch.Tensor, RecurrentState]:
    if not bool(torch.isfinite(E_hat).all()):
        raise DataError("Non-finite expectation input")
    h, c = model.expectation_lstm(E_hat, (expectation_state.h, expectation_state.c))
    return h, RecurrentState(h, c)


def predict_returns(model: TopicExpectationModel, S: torch.Tensor, T: torch.Tensor, E: torch.Tensor,
                    valid: torch.Tensor) -> Tuple[torch.Tensor, HeadOutputs]:
    """
    Combine the stock, topic and expectation heads into r_hat in (-1, 1).

    Dropout (training mode only) is applied to S and E before their heads.
    """
    r_stock = torch.tanh(model.head_stock(model.dropout(S))).squeeze(-1)
    r_expectation = torch.tanh(model.head_expectation(model.dropout(E))).squeeze(-1)
    weights, attended = topic_attention(T, S, valid)
    o = torch.tanh(model.topic_readout(attended))
    r_topic = torch.tanh(model.head_topic(o)).squeeze(-1)
    heads = HeadOutputs(r_stock, r_topic, r_expectation, weights)
    return model.combine(heads), heads


def loss(predicted: Sequence[ReturnVector], actual: Sequence[ReturnVector]) -> torch.Tensor:
    """
    Mean squared error over all labelled stock-days.

    The sum of squared residuals is divided by the number of stock-days that
    have a label, which equals D * n when every day has n labelled stocks.
    Entries masked out in ``actual`` are skipped.

    Raises:
        AlignmentError: If the sequences disagree on dates or stocks
    """
    if not predicted or not actual:
        raise AlignmentError("Loss needs at least one day of predictions and labels")
    for i in range(max(len(predicted), len(actual))):
        if i >= len(predicted) or i >= len(actual):
            missing = actual[i] if i >= len(predicted) else predicted[i]
            raise AlignmentError(f"Sequences end at different dates; first unmatched date {missing.date}",
                                 missing.date)
        p, a = predicted[i], actual[i]
        if p.date != a.date or list(p.stock_ids) != list(a.stock_ids):
            first = min(p.date, a.date)
            raise AlignmentError(f"Predictions and labels are misaligned at {first}", first)

    total = torch.zeros((), dtype=DTYPE)
    count = 0
    for p, a in zip(predicted, actual):
        r_hat = p.values if isinstance(p.values, torch.Tensor) else torch.as_tensor(p.numpy())
        r = a.values if isinstance(a.values, torch.Tensor) else torch.as_tensor(a.numpy())
        residual = r.to(DTYPE) - r_hat.to(DTYPE)
        if a.mask is not None:
            residual = residual[torch.as_tensor(np.asarray(a.mask, dtype=bool))]
        total = total + torch.dot(residual, residual)
        count += residual.numel()
    if count == 0:
        raise AlignmentError(f"No labelled stock-days between {actual[0].date} and {actual[-1].date}")
    return total / count
