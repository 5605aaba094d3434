"""Cluster-balanced pruning of a dataset down to a retained fraction.

Pipeline: draw a random clustering subset, run hierarchical k-means on it,
assign every row of the full dataset to the coarsest-level centroids, split
the retention budget across clusters as evenly as their sizes allow, then
sample inside each cluster according to the diversity parameter ``eta``.

``eta`` steers within-cluster sampling: 0 prefers points nearest the
centroid, 1 prefers points on the cluster boundary. In stochastic mode
0.5 is exactly uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingMatrix, as_array, random_subset
from .hierarchy import final_level, hkmeans
from .kmeans import DEFAULT_BATCH_ROWS, DEFAULT_MAX_ITERS, DEFAULT_TOL, assign_nearest
from .rng import SeededRng
from .selection import Selection, source_hash

STOCHASTIC = "stochastic"
BAND = "deterministic-band"
MODES = (STOCHASTIC, BAND)


@dataclass(frozen=True)
class PruneConfig:
    n_c: int = 1000
    ks: tuple[int, ...] = (64, 10)
    rho: float = 0.5
    eta: float = 0.0
    mode: str = STOCHASTIC
    sharpness: float = 8.0
    seed: int = 0
    normalize: bool = False
    restarts: int = 10
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    weighted: bool = False
    batch_rows: int = DEFAULT_BATCH_ROWS
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if not 0 <= self.eta <= 1:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.sharpness > 0:
            raise ValueError(f"sharpness must be > 0, got {self.sharpness}")
        if not self.ks or any(k < 1 for k in self.ks):
            raise ValueError(f"ks must be non-empty positive counts, got {self.ks}")
        if self.n_c < self.ks[0]:
            raise ValueError(f"n_c={self.n_c} is smaller than k_1={self.ks[0]}")
        if self.batch_rows < 1 or self.threads < 1 or self.restarts < 1:
            raise ValueError("batch_rows, threads and restarts must be >= 1")


def target_size(rho: float, n: int) -> int:
    """round(rho * n), halves rounded up."""
    return min(n, int(math.floor(rho * n + 0.5)))


def quota_allocate(cluster_sizes, target: int) -> list[int]:
    """Split ``target`` across clusters by water-filling toward equal quotas.

    Every cluster that still has room gets an equal share; a cluster smaller
    than the share gives all it has and drops out, and the share is
    recomputed. The integer remainder goes one each to the remaining clusters
    in descending size order (ties to the lower index). The result has the
    smallest possible maximum quota among allocations summing to ``target``.
    """
    sizes = [int(s) for s in cluster_sizes]
    if any(s < 0 for s in sizes):
        raise ValueError("cluster sizes must be non-negative")
    if target < 0 or target > sum(sizes):
        raise ValueError(f"target {target} is outside [0, {sum(sizes)}]")
    quotas = [0] * len(sizes)
    active = [i for i, s in enumerate(sizes) if s > 0]
    remaining = target
    while active:
        share = remaining // len(active)
        full = [i for i in active if sizes[i] <= share]
        if not full:
            break
        for i in full:
            quotas[i] = sizes[i]
            remaining -= sizes[i]
        active = [i for i in active if sizes[i] > share]
    if active:
        share, extra = divmod(remaining, len(active))
        for i in active:
            quotas[i] = share
        for i in sorted(active, key=lambda i: (-sizes[i], i))[:extra]:
            quotas[i] += 1
    return quotas


def rank_members(indices, distances) -> np.ndarray:
    """Member indices ordered by distance to centroid, ties to the lower index."""
    indices = np.asarray(indices, dtype=np.int64)
    distances = np.asarray(distances, dtype=np.float64)
    return indices[np.lexsort((indices, distances))]


def sample_within_cluster(
    indices,
    distances,
    q: int,
    eta: float,
    mode: str = STOCHASTIC,
    sharpness: float = 8.0,
    rng: SeededRng | None = None,
) -> np.ndarray:
    """Pick ``q`` members of one cluster.

    Members are ranked by centroid distance and given a normalised rank
    ``r`` in [0, 1]. ``deterministic-band`` takes the ``q`` consecutive ranks
    starting at ``floor(eta * (m - q))``. ``stochastic`` samples without
    replacement with log-weight ``sharpness * (1 - 2*eta) * (1 - r)`` using
    Gumbel top-q keys. Returns the chosen indices sorted ascending.
    """
    ranked = rank_members(indices, distances)
    m = ranked.size
    if q > m:
        raise ValueError(f"cannot pick {q} of {m} members")
    if q < 0:
        raise ValueError("q must be >= 0")
    if q == 0:
        return np.empty(0, dtype=np.int64)
    if mode == BAND:
        start = int(math.floor(eta * (m - q)))
        chosen = ranked[start : start + q]
    elif mode == STOCHASTIC:
        if rng is None:
            raise ValueError("stochastic mode needs an rng")
        r = np.arange(m) / (m - 1) if m > 1 else np.zeros(1)
        logw = sharpness * (1.0 - 2.0 * eta) * (1.0 - r)
        keys = logw + rng.gen.gumbel(size=m)
        top = np.argsort(-keys, kind="stable")[:q]
        chosen = ranked[top]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return np.sort(chosen)


def prune(
    features,
    config: PruneConfig,
    *,
    epoch: int = 0,
    rng: SeededRng | None = None,
    eta: float | None = None,
) -> Selection:
    """Select ``round(rho * n)`` rows of ``features`` balanced across clusters.

    ``rng`` defaults to ``SeededRng(config.seed).split("prune", epoch)``;
    ``eta`` overrides ``config.eta`` for this call.
    """
    eta = config.eta if eta is None else float(eta)
    if not 0 <= eta <= 1:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    rng = rng or SeededRng(config.seed).split("prune", epoch)
    matrix = features if isinstance(features, EmbeddingMatrix) else EmbeddingMatrix(features)
    X = as_array(matrix)
    n = X.shape[0]
    target = target_size(config.rho, n)
    provenance = dict(
        epoch=epoch, rho=config.rho, eta=eta, seed=rng.seed, source_hash=source_hash(matrix)
    )
    if target == n:
        return Selection.full(n, cluster_sizes=(n,), quotas=(n,), **provenance)
    if config.n_c > n:
        raise ValueError(f"n_c={config.n_c} exceeds dataset size {n}")
    if config.normalize:
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        X = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)

    sub_idx = random_subset(n, config.n_c, rng.split("subset"))
    model = hkmeans(
        X[sub_idx],
        config.ks,
        rng.split("hkmeans"),
        restarts=config.restarts,
        tol=config.tol,
        max_iters=config.max_iters,
        weighted=config.weighted,
        threads=config.threads,
    )
    centroids = final_level(model)
    labels, dist = assign_nearest(
        X, centroids, batch_rows=config.batch_rows, threads=config.threads
    )
    k = centroids.shape[0]
    sizes = np.bincount(labels, minlength=k)
    quotas = quota_allocate(sizes.tolist(), target)

    picked = []
    sample_rng = rng.split("sample")
    order = np.argsort(labels, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    for c in range(k):
        members = order[bounds[c] : bounds[c + 1]]
        if quotas[c] == 0:
            continue
        picked.append(
            sample_within_cluster(
                members,
                dist[members],
                quotas[c],
                eta,
                config.mode,
                config.sharpness,
                sample_rng.split("cluster", c),
            )
        )
    indices = np.sort(np.concatenate(picked)) if picked else np.empty(0, dtype=np.int64)
    return Selection(
        indices, cluster_sizes=tuple(sizes.tolist()), quotas=tuple(quotas), **provenance
    )
