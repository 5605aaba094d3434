"""Desk-scale contrastive trainer: a linear encoder trained with NT-Xent.

Each step draws two augmented views of a mini-batch (Gaussian noise, then
inverted dropout), encodes both with ``x @ W``, and takes one SGD step with
weight decay on the analytic NT-Xent gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .embeddings import EmbeddingMatrix
from .rng import SeededRng
from .selection import Selection


class CollapsedEmbeddingError(FloatingPointError):
    """An embedding row has zero norm, so cosine similarity is undefined."""


@dataclass(frozen=True)
class TrainerHyper:
    d_emb: int = 8
    lr: float = 0.05
    temperature: float = 0.5
    noise: float = 0.5
    dropout: float = 0.1
    batch_size: int = 128
    weight_decay: float = 1e-4
    init_scale: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be >= 0")
        if self.d_emb < 1:
            raise ValueError("d_emb must be >= 1")


@dataclass(frozen=True, eq=False)
class EncoderParams:
    W: np.ndarray
    hyper: TrainerHyper = TrainerHyper()

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError("W must be a d_in x d_emb matrix")
        if not np.all(np.isfinite(W)):
            raise FloatingPointError("encoder weights are not finite")
        object.__setattr__(self, "W", W)

    @classmethod
    def init(cls, d_in: int, hyper: TrainerHyper, rng: SeededRng) -> "EncoderParams":
        W = rng.gen.standard_normal((d_in, hyper.d_emb)) * (hyper.init_scale / math.sqrt(d_in))
        return cls(W, hyper)


def augment(x, sigma: float, p: float, rng: SeededRng) -> np.ndarray:
    """Add N(0, sigma^2) noise, then zero each coordinate with probability ``p``.

    Survivors are scaled by 1/(1-p) so the view is unbiased. Works on a
    vector or a batch of rows.
    """
    x = np.asarray(x, dtype=np.float64)
    out = x + sigma * rng.gen.standard_normal(x.shape) if sigma > 0 else x.copy()
    if p > 0:
        keep = rng.gen.random(x.shape) >= p
        out = np.where(keep, out / (1.0 - p), 0.0)
    return out


def ntxent_loss(Z1, Z2, tau: float):
    """Mean NT-Xent over the 2B views and its gradient w.r.t. ``Z1`` and ``Z2``.

    Rows are L2-normalised internally. Anchor i's positive is its counterpart
    view; the softmax runs over all 2B-1 other views.
    """
    Z1 = np.asarray(Z1, dtype=np.float64)
    Z2 = np.asarray(Z2, dtype=np.float64)
    if Z1.shape != Z2.shape or Z1.ndim != 2:
        raise ValueError(f"view shapes differ or are not 2-D: {Z1.shape} vs {Z2.shape}")
    if not tau > 0:
        raise ValueError("tau must be > 0")
    B = Z1.shape[0]
    N = 2 * B
    Z = np.vstack([Z1, Z2])
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    if np.any(norms == 0):
        raise CollapsedEmbeddingError(f"zero-norm embedding in row {int(np.argmin(norms))}")
    U = Z / norms[:, None]
    S = (U @ U.T) / tau
    np.fill_diagonal(S, -np.inf)
    rows = np.arange(N)
    pos = (rows + B) % N
    top = S.max(axis=1, keepdims=True)
    E = np.exp(S - top)
    denom = E.sum(axis=1)
    loss = float(np.mean(top[:, 0] + np.log(denom) - S[rows, pos]))

    G = E / denom[:, None]
    G[rows, pos] -= 1.0
    G /= N
    dU = ((G + G.T) @ U) / tau
    dZ = (dU - U * np.einsum("ij,ij->i", dU, U)[:, None]) / norms[:, None]
    return loss, (dZ[:B], dZ[B:])


def _n_rows(data) -> int:
    return data.n if isinstance(data, EmbeddingMatrix) else len(data)


def _rows(data, idx) -> np.ndarray:
    if isinstance(data, EmbeddingMatrix):
        return data.values[idx].astype(np.float64)
    return np.asarray(data[idx], dtype=np.float64)


def _selection_indices(selection, n: int) -> np.ndarray:
    if selection is None:
        return np.arange(n, dtype=np.int64)
    idx = selection.indices if isinstance(selection, Selection) else np.asarray(selection)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"selection indices out of range for {n} rows")
    return idx


def _step_grad(W, X, h: TrainerHyper, rng: SeededRng):
    V1 = augment(X, h.noise, h.dropout, rng)
    V2 = augment(X, h.noise, h.dropout, rng)
    loss, (g1, g2) = ntxent_loss(V1 @ W, V2 @ W, h.temperature)
    return loss, V1.T @ g1 + V2.T @ g2


def train_epoch(params: EncoderParams, data, selection, rng: SeededRng):
    """One pass over shuffled mini-batches of ``selection`` (None = all rows).

    The last incomplete batch is dropped. Returns the updated params and the
    mean batch loss.
    """
    h = params.hyper
    idx = _selection_indices(selection, _n_rows(data))
    if idx.size < h.batch_size:
        raise ValueError(f"selection of {idx.size} rows is smaller than one batch ({h.batch_size})")
    order = rng.gen.permutation(idx)
    W = params.W.copy()
    losses = []
    for b in range(idx.size // h.batch_size):
        batch = order[b * h.batch_size : (b + 1) * h.batch_size]
        loss, grad = _step_grad(W, _rows(data, batch), h, rng)
        W -= h.lr * (grad + h.weight_decay * W)
        losses.append(loss)
    if not np.all(np.isfinite(W)):
        raise FloatingPointError("encoder weights diverged")
    return replace(params, W=W), float(np.mean(losses))


def evaluate_loss(params: EncoderParams, data, rng: SeededRng) -> float:
    """Mean NT-Xent over consecutive batches of ``data`` without updating ``params``."""
    h = params.hyper
    n = _n_rows(data)
    bs = min(h.batch_size, n)
    if bs < 2:
        raise ValueError("need at least two rows to evaluate a contrastive loss")
    losses = []
    for b in range(n // bs):
        X = _rows(data, np.arange(b * bs, (b + 1) * bs))
        V1 = augment(X, h.noise, h.dropout, rng)
        V2 = augment(X, h.noise, h.dropout, rng)
        losses.append(ntxent_loss(V1 @ params.W, V2 @ params.W, h.temperature)[0])
    return float(np.mean(losses))


def embed(params: EncoderParams, data) -> EmbeddingMatrix:
    """Rows ``x @ W``, unnormalised; labels and ids carry over."""
    X = _rows(data, slice(None))
    if X.shape[1] != params.W.shape[0]:
        raise ValueError(f"data has d={X.shape[1]}, encoder expects {params.W.shape[0]}")
    Z = X @ params.W
    if isinstance(data, EmbeddingMatrix):
        return EmbeddingMatrix(Z, data.labels, data.ids)
    return EmbeddingMatrix(Z)


class ToyTrainer:
    """Trainer contract used by the curriculum driver."""

    def __init__(self, hyper: TrainerHyper | None = None):
        self.hyper = hyper or TrainerHyper()

    def init_params(self, d_in: int, rng: SeededRng) -> EncoderParams:
        return EncoderParams.init(d_in, self.hyper, rng)

    def train_epoch(self, params, data, selection, rng):
        return train_epoch(params, data, selection, rng)

    def evaluate_loss(self, params, data, rng):
        return evaluate_loss(params, data, rng)

    def embed(self, params, data):
        return embed(params, data)
