"""Hierarchical k-means: cluster the data, then recursively cluster the centroids."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingMatrix, as_array, atomic_write, load_embeddings, save_embeddings
from .kmeans import DEFAULT_MAX_ITERS, DEFAULT_TOL, kmeans
from .rng import SeededRng

MANIFEST = "clusters.manifest"


@dataclass(frozen=True)
class HierarchyParams:
    ks: tuple[int, ...]
    seed: int
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    restarts: int = 10
    weighted: bool = False

    @property
    def L(self) -> int:
        return len(self.ks)


@dataclass
class ClusterModel:
    """Centroid sets for every level, finest first."""

    levels: list[np.ndarray]
    params: HierarchyParams

    def __post_init__(self):
        if len(self.levels) != self.params.L:
            raise ValueError(f"expected {self.params.L} levels, got {len(self.levels)}")
        for i, (C, k) in enumerate(zip(self.levels, self.params.ks)):
            if C.shape[0] != k:
                raise ValueError(f"level {i + 1} has {C.shape[0]} centroids, expected {k}")

    def save(self, directory) -> Path:
        """Write one EMB1 file per level plus a text manifest."""
        directory = Path(directory)
        lines = [f"params={json.dumps(asdict(self.params), sort_keys=True)}"]
        for i, C in enumerate(self.levels, 1):
            name = f"level{i}.emb"
            save_embeddings(EmbeddingMatrix(C), directory / name)
            lines.append(f"level{i}={name}")
        path = directory / MANIFEST
        atomic_write(path, "\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, directory) -> "ClusterModel":
        directory = Path(directory)
        entries = {}
        for line in (directory / MANIFEST).read_text(encoding="utf-8").splitlines():
            if line.strip():
                key, value = line.split("=", 1)
                entries[key.strip()] = value.strip()
        raw = json.loads(entries.pop("params"))
        raw["ks"] = tuple(raw["ks"])
        params = HierarchyParams(**raw)
        levels = [
            load_embeddings(directory / entries[f"level{i}"]).values.astype(np.float64)
            for i in range(1, params.L + 1)
        ]
        return cls(levels, params)


def hkmeans(
    subset,
    ks,
    rng: SeededRng,
    *,
    restarts: int = 10,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    weighted: bool = False,
    threads: int = 1,
) -> ClusterModel:
    """Cluster ``subset`` into ``ks[0]`` groups, then each level's centroids into the next.

    Upper levels treat child centroids as unweighted points unless ``weighted``
    is set, in which case each centroid counts with its child-cluster mass.
    """
    X = as_array(subset)
    ks = tuple(int(k) for k in ks)
    if not ks:
        raise ValueError("need at least one level")
    if any(k < 1 for k in ks):
        raise ValueError(f"every k must be >= 1, got {ks}")
    if any(b > a for a, b in zip(ks, ks[1:])):
        raise ValueError(f"clusters per level must be non-increasing, got {ks}")
    if ks[0] > X.shape[0]:
        raise ValueError(f"k_1={ks[0]} exceeds subset size {X.shape[0]}")

    levels = []
    points, mass = X, None
    for t, k in enumerate(ks):
        res = kmeans(
            points,
            k,
            rng.split("level", t),
            restarts=restarts,
            max_iters=max_iters,
            tol=tol,
            weights=mass if weighted else None,
            threads=threads,
        )
        levels.append(res.centroids)
        child_mass = np.ones(points.shape[0]) if mass is None else mass
        mass = np.bincount(res.labels, weights=child_mass, minlength=k)
        points = res.centroids
    params = HierarchyParams(ks, rng.seed, tol, max_iters, restarts, weighted)
    return ClusterModel(levels, params)


def final_level(model: ClusterModel) -> np.ndarray:
    return model.levels[-1]
