"""Seeded k-means++ and Lloyd iteration with empty-cluster repair.

Distances are plain Euclidean on the rows as given. Ties in assignment go
to the lowest centroid index. Sums of squared errors are accumulated with
``math.fsum`` so the total is correctly rounded and does not depend on how
rows were blocked.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .embeddings import as_array
from .rng import SeededRng

DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-6
DEFAULT_BATCH_ROWS = 8192
# cap on the n*k*d temporary built per distance block
_BLOCK_ELEMS = 1 << 21


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    sse: float
    iterations: int
    converged: bool
    sse_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _check_dims(X: np.ndarray, C: np.ndarray) -> None:
    if C.ndim != 2 or C.shape[1] != X.shape[1]:
        raise ValueError(
            f"dimension mismatch: data has d={X.shape[1]}, centroids have shape {C.shape}"
        )


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Exact ``(x - c)^2`` sums; avoids the expanded-norm form so ties stay ties."""
    out = np.empty((X.shape[0], C.shape[0]))
    step = max(1, _BLOCK_ELEMS // max(1, C.shape[0] * X.shape[1]))
    for s in range(0, X.shape[0], step):
        diff = X[s : s + step, None, :] - C[None, :, :]
        out[s : s + step] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def _assign_block(X: np.ndarray, C: np.ndarray):
    """Nearest centroid per row with exact tie semantics.

    The expanded form ``|x|^2 - 2x.c + |c|^2`` screens candidates; any row
    whose runner-up lies within the rounding bound of the minimum is redone
    with exact differences, so labels match a direct scan.
    """
    xx = np.einsum("ij,ij->i", X, X)
    cc = np.einsum("ij,ij->i", C, C)
    approx = xx[:, None] - 2.0 * (X @ C.T) + cc[None, :]
    best = approx.min(axis=1)
    bound = 16.0 * (X.shape[1] + 2) * np.finfo(np.float64).eps * (xx + cc.max())
    close = (approx <= (best + 2.0 * bound)[:, None]).sum(axis=1) > 1
    labels = np.argmin(approx, axis=1)
    if np.any(close):
        rows = np.flatnonzero(close)
        labels[rows] = np.argmin(_sq_dists(X[rows], C), axis=1)
    diff = X - C[labels]
    return labels, np.einsum("ij,ij->i", diff, diff)


def _assign(X, C, batch_rows=DEFAULT_BATCH_ROWS, threads=1):
    n = X.shape[0]
    if C.shape[0] == 0:
        raise ValueError("need at least one centroid")
    starts = list(range(0, n, batch_rows)) or [0]
    blocks = [(X[s : s + batch_rows], C) for s in starts]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _assign_block(*b), blocks))
    else:
        parts = [_assign_block(*b) for b in blocks]
    labels = np.concatenate([p[0] for p in parts]).astype(np.int64)
    d2 = np.concatenate([p[1] for p in parts])
    return labels, d2


def assign_nearest(data, centroids, *, batch_rows=DEFAULT_BATCH_ROWS, threads=1):
    """Nearest centroid per row and the Euclidean distance to it.

    Rows are processed in blocks of ``batch_rows``; the result does not depend
    on the block size or thread count.
    """
    X = as_array(data)
    C = np.asarray(centroids, dtype=np.float64)
    _check_dims(X, C)
    labels, d2 = _assign(X, C, batch_rows, threads)
    return labels, np.sqrt(d2)


def _weighted_sse(d2: np.ndarray, w: np.ndarray | None) -> float:
    return math.fsum(d2 if w is None else w * d2)


def kmeanspp_init(data, k: int, rng: SeededRng, weights=None) -> np.ndarray:
    """k-means++ seeding.

    The first centroid is a uniform row (weight-proportional when ``weights``
    is given); each next one is drawn proportionally to the squared distance
    to the nearest centroid chosen so far. If every remaining distance is
    zero the pick falls back to a uniform row.
    """
    X = as_array(data)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    w = None if weights is None else np.asarray(weights, dtype=np.float64)
    gen = rng.gen

    def draw(p):
        cum = np.cumsum(p)
        if not cum[-1] > 0:
            return int(gen.integers(n))
        r = gen.random() * cum[-1]
        return min(int(np.searchsorted(cum, r, side="right")), n - 1)

    first = int(gen.integers(n)) if w is None else draw(w)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[first]
    d2 = _sq_dists(X, centers[:1])[:, 0]
    for j in range(1, k):
        idx = draw(d2 if w is None else w * d2)
        centers[j] = X[idx]
        np.minimum(d2, _sq_dists(X, centers[j : j + 1])[:, 0], out=d2)
    return centers


def _repair_empty(labels, d2, counts, k):
    """Move the farthest eligible point into each empty cluster.

    A point is eligible when its own cluster keeps at least one other member.
    Candidates are visited by decreasing distance to their centroid, ties by
    lowest point index. Returns the repaired clusters and the points used.
    """
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return []
    order = np.lexsort((np.arange(labels.size), -d2))
    moves = []
    pos = 0
    for c in empty.tolist():
        while pos < order.size and counts[labels[order[pos]]] <= 1:
            pos += 1
        if pos == order.size:
            break
        p = int(order[pos])
        pos += 1
        counts[labels[p]] -= 1
        labels[p] = c
        counts[c] = 1
        d2[p] = 0.0
        moves.append((c, p))
    return moves


def _means(X, labels, k, w, old):
    wts = np.ones(X.shape[0]) if w is None else w
    mass = np.bincount(labels, weights=wts, minlength=k)
    sums = np.stack(
        [np.bincount(labels, weights=wts * X[:, j], minlength=k) for j in range(X.shape[1])],
        axis=1,
    ) if X.shape[1] else np.zeros((k, 0))
    out = old.copy()
    nz = mass > 0
    out[nz] = sums[nz] / mass[nz, None]
    return out


def lloyd(
    data,
    init,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    *,
    weights=None,
    batch_rows: int = DEFAULT_BATCH_ROWS,
    threads: int = 1,
) -> KMeansResult:
    """Lloyd iterations from ``init``.

    Each iteration updates centroids to the (weighted) means of their members,
    then reassigns. Empty clusters are repaired before the update by relocating
    the farthest point (see ``_repair_empty``). Iteration stops once the largest
    centroid displacement is at most ``tol`` or after ``max_iters`` updates.
    """
    X = as_array(data)
    C = np.array(init, dtype=np.float64)
    _check_dims(X, C)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if tol < 0:
        raise ValueError("tol must be >= 0")
    k = C.shape[0]
    w = None if weights is None else np.asarray(weights, dtype=np.float64)

    labels, d2 = _assign(X, C, batch_rows, threads)
    sse = _weighted_sse(d2, w)
    history = [sse]
    slack = 1e-12 * sse
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        counts = np.bincount(labels, minlength=k)
        _repair_empty(labels, d2, counts, k)
        new_C = _means(X, labels, k, w, C)
        shift = float(np.max(np.sqrt(np.sum((new_C - C) ** 2, axis=1)))) if k else 0.0
        C = new_C
        labels, d2 = _assign(X, C, batch_rows, threads)
        new_sse = _weighted_sse(d2, w)
        if new_sse > sse + slack:
            raise AssertionError(f"Lloyd SSE increased from {sse!r} to {new_sse!r} at iteration {it}")
        sse = new_sse
        history.append(sse)
        if shift <= tol:
            converged = True
            break
    return KMeansResult(C, labels, sse, it, converged, history)


def kmeans(
    data,
    k: int,
    rng: SeededRng,
    *,
    restarts: int = 10,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    weights=None,
    threads: int = 1,
) -> KMeansResult:
    """Best-SSE result over ``restarts`` k-means++ seeded Lloyd runs.

    Restart r draws from ``rng.split("restart", r)``; ties in SSE go to the
    lowest restart index.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    X = as_array(data)
    best = None
    for r in range(restarts):
        sub = rng.split("restart", r)
        init = kmeanspp_init(X, k, sub, weights=weights)
        res = lloyd(X, init, max_iters, tol, weights=weights, threads=threads)
        if best is None or res.sse < best.sse:
            best = res
    return best
