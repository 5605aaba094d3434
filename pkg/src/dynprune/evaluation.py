"""k-NN probing and balance/redundancy metrics for selections."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingMatrix, as_array

CLASSIFICATION = "classification"
REGRESSION = "regression"
DEFAULT_K = 20
_QUERY_BLOCK = 512


@dataclass(frozen=True)
class ProbeReport:
    task: str
    k: int
    metric: float
    n_train: int
    n_test: int

    @property
    def metric_name(self) -> str:
        return "accuracy" if self.task == CLASSIFICATION else "rmse"


@dataclass(frozen=True)
class BalanceReport:
    entropy: float
    counts: dict[int, int]
    cv: float
    redundancy: float | None = None


def _prep(emb, metric):
    X = as_array(emb)
    if metric == "cosine":
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        X = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
    elif metric != "euclidean":
        raise ValueError(f"unknown metric {metric!r}")
    return X


def neighbors(train, query, k: int) -> np.ndarray:
    """Indices of the k nearest train rows per query, nearest first, ties to lower index."""
    out = np.empty((query.shape[0], k), dtype=np.int64)
    for s in range(0, query.shape[0], _QUERY_BLOCK):
        Q = query[s : s + _QUERY_BLOCK]
        d2 = np.zeros((Q.shape[0], train.shape[0]))
        for j in range(train.shape[1]):
            d2 += (Q[:, j : j + 1] - train[None, :, j]) ** 2
        out[s : s + Q.shape[0]] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def knn_predict(train_emb, train_targets, query_emb, k: int = DEFAULT_K,
                task: str = CLASSIFICATION, metric: str = "euclidean") -> np.ndarray:
    """Majority vote (ties to the smallest class id) or neighbour-mean regression."""
    train = _prep(train_emb, metric)
    query = _prep(query_emb, metric)
    y = np.asarray(train_targets)
    if train.shape[0] == 0:
        raise ValueError("empty train set")
    if y.shape != (train.shape[0],):
        raise ValueError("train targets must have one entry per train row")
    if not 1 <= k <= train.shape[0]:
        raise ValueError(f"need 1 <= k <= {train.shape[0]}, got k={k}")
    if query.shape[1] != train.shape[1]:
        raise ValueError("train and query dimensions differ")
    nn = neighbors(train, query, k)
    if task == CLASSIFICATION:
        y = y.astype(np.int64)
        if y.min() < 0:
            raise ValueError("class ids must be non-negative")
        votes = np.zeros((query.shape[0], int(y.max()) + 1), dtype=np.int64)
        np.add.at(votes, (np.repeat(np.arange(query.shape[0]), k), y[nn].ravel()), 1)
        return np.argmax(votes, axis=1)
    if task == REGRESSION:
        return y.astype(np.float64)[nn].mean(axis=1)
    raise ValueError(f"unknown task {task!r}")


def probe(train_emb, train_targets, test_emb, test_targets, k: int = DEFAULT_K,
          task: str = CLASSIFICATION, metric: str = "euclidean") -> ProbeReport:
    """Accuracy (classification) or RMSE (regression) of k-NN on the test split."""
    if (isinstance(train_emb, EmbeddingMatrix) and isinstance(test_emb, EmbeddingMatrix)
            and train_emb.ids is not None and test_emb.ids is not None
            and np.intersect1d(train_emb.ids, test_emb.ids).size):
        raise ValueError("train and test splits share sample ids")
    pred = knn_predict(train_emb, train_targets, test_emb, k, task, metric)
    truth = np.asarray(test_targets)
    if truth.shape != pred.shape:
        raise ValueError("test targets must have one entry per test row")
    if task == CLASSIFICATION:
        value = float(np.mean(pred == truth)) if truth.size else 0.0
    else:
        value = math.sqrt(math.fsum((pred - truth.astype(np.float64)) ** 2) / truth.size)
    return ProbeReport(task, k, value, len(train_targets), truth.size)


def normalized_entropy(counts, m: int) -> float:
    counts = np.asarray([c for c in counts if c > 0], dtype=np.float64)
    if m <= 1 or counts.size == 0:
        return 0.0
    p = counts / counts.sum()
    return float(min(1.0, max(0.0, -math.fsum(p * np.log(p)) / math.log(m))))


def redundancy_fraction(emb, eps: float) -> float:
    """Share of rows whose nearest other row lies within ``eps``."""
    X = as_array(emb)
    n = X.shape[0]
    if n < 2:
        raise ValueError("redundancy needs at least two points")
    nearest = np.empty(n)
    for s in range(0, n, _QUERY_BLOCK):
        Q = X[s : s + _QUERY_BLOCK]
        d2 = np.zeros((Q.shape[0], n))
        for j in range(X.shape[1]):
            d2 += (Q[:, j : j + 1] - X[None, :, j]) ** 2
        d2[np.arange(Q.shape[0]), np.arange(s, s + Q.shape[0])] = np.inf
        nearest[s : s + Q.shape[0]] = d2.min(axis=1)
    return float(np.mean(np.sqrt(nearest) <= eps))


def balance_metrics(labels, full_labels=None, emb=None, eps: float = 0.0) -> BalanceReport:
    """Entropy of the label histogram normalised by ln(classes in the full data).

    ``full_labels`` defaults to ``labels``. The coefficient of variation is
    taken over the classes of the full data, so a dropped class counts as zero.
    Redundancy is computed only when ``emb`` is given.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("need a non-empty label vector")
    universe = np.unique(labels if full_labels is None else np.asarray(full_labels, dtype=np.int64))
    present, counts = np.unique(labels, return_counts=True)
    count_map = {int(c): 0 for c in universe}
    count_map.update({int(c): int(k) for c, k in zip(present, counts)})
    allc = np.array(list(count_map.values()), dtype=np.float64)
    cv = float(allc.std() / allc.mean())
    red = None if emb is None else redundancy_fraction(emb, eps)
    return BalanceReport(normalized_entropy(counts, len(universe)), count_map, cv, red)
