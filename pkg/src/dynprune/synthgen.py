"""Heavy-tailed synthetic concept data.

Concept j (0-based) is drawn with probability proportional to (j+1)^-s.
Concept means are placed deterministically so every pair is at least
``gamma * sigma`` apart:

* ``d >= m``: mean j is ``gamma*sigma/sqrt(2) * e_j`` (scaled orthogonal
  basis), so every pair is exactly ``gamma*sigma`` apart.
* ``d < m``: means sit on the integer lattice ``{0..g-1}^d`` scaled by
  ``gamma*sigma``, with ``g = ceil(m ** (1/d))``, taking the first m points
  in lexicographic order. Nearest pairs are exactly ``gamma*sigma`` apart.

When ``sigma == 0`` the separation unit is 1 instead, so concepts stay
distinct points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingMatrix
from .rng import SeededRng


@dataclass(frozen=True)
class SynthConfig:
    n: int = 4000
    d: int = 16
    concepts: int = 10
    zipf: float = 1.5
    sigma: float = 1.0
    gamma: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.concepts < 2:
            raise ValueError("need at least 2 concepts")
        if self.n < self.concepts:
            raise ValueError(f"n={self.n} is smaller than the concept count {self.concepts}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.zipf < 0:
            raise ValueError("zipf exponent must be >= 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")


def zipf_proportions(m: int, s: float) -> np.ndarray:
    if m < 1 or s < 0:
        raise ValueError(f"need m >= 1 and s >= 0, got m={m}, s={s}")
    w = np.arange(1, m + 1, dtype=np.float64) ** -float(s)
    return w / math.fsum(w)


def concept_means(m: int, d: int, sigma: float, gamma: float) -> np.ndarray:
    unit = sigma if sigma > 0 else 1.0
    sep = gamma * unit
    if d >= m:
        means = np.zeros((m, d))
        means[np.arange(m), np.arange(m)] = sep / math.sqrt(2.0)
        return means
    g = math.ceil(round(m ** (1.0 / d), 12))
    while g**d < m:
        g += 1
    pts = list(itertools.islice(itertools.product(range(g), repeat=d), m))
    return np.array(pts, dtype=np.float64) * sep


def generate(config: SynthConfig, proportions=None, stream: str = "synth") -> EmbeddingMatrix:
    """Sample ``config.n`` labelled rows.

    ``proportions`` overrides the Zipf concept distribution (e.g. uniform
    for a balanced probe set sharing the same concept geometry); ``stream``
    names the random substream so such sets are independent of the main one.
    """
    rng = SeededRng(config.seed).split(stream)
    m = config.concepts
    p = zipf_proportions(m, config.zipf) if proportions is None else np.asarray(proportions, float)
    if p.shape != (m,) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, rel_tol=1e-9):
        raise ValueError("proportions must be a probability vector over the concepts")
    means = concept_means(m, config.d, config.sigma, config.gamma)
    labels = rng.split("labels").gen.choice(m, size=config.n, p=p)
    noise = rng.split("noise").gen.standard_normal((config.n, config.d))
    values = means[labels] + config.sigma * noise
    return EmbeddingMatrix(values, labels)
