"""Retained-index selections and their text file format.

A selection file is UTF-8 text: ``#``-prefixed ``key=value`` header lines
carrying provenance, then one decimal index per line in ascending order::

    # epoch=4
    # rho=0.5
    # eta=0.0
    # seed=7
    # source_hash=3f2a...
    0
    3
    4
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingMatrix, atomic_write, check_index_subset

# Header keys written in this order; extra provenance follows sorted.
_CORE_KEYS = ("epoch", "rho", "eta", "seed", "source_hash")


class SelectionFormatError(ValueError):
    pass


@dataclass(eq=False)
class Selection:
    """Sorted retained indices plus the provenance of the pruning call."""

    indices: np.ndarray
    epoch: int = 0
    rho: float = 1.0
    eta: float = 0.0
    seed: int = 0
    source_hash: str = ""
    cluster_sizes: tuple[int, ...] = ()
    quotas: tuple[int, ...] = ()
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or (idx.size and np.any(np.diff(idx) <= 0)):
            raise ValueError("selection indices must be strictly ascending")
        if idx.size and idx[0] < 0:
            raise ValueError("selection indices must be non-negative")
        self.indices = idx

    def __len__(self):
        return int(self.indices.size)

    def validate(self, n: int) -> None:
        check_index_subset(self.indices, n)

    def header(self) -> dict[str, str]:
        h = {
            "epoch": str(self.epoch),
            "rho": repr(float(self.rho)),
            "eta": repr(float(self.eta)),
            "seed": str(self.seed),
            "source_hash": self.source_hash,
        }
        if self.cluster_sizes:
            h["cluster_sizes"] = ",".join(map(str, self.cluster_sizes))
        if self.quotas:
            h["quotas"] = ",".join(map(str, self.quotas))
        h.update(self.extra)
        return h

    def to_text(self) -> str:
        lines = [f"# {k}={v}" for k, v in self.header().items()]
        lines.extend(str(i) for i in self.indices.tolist())
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        atomic_write(path, self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Selection":
        header: dict[str, str] = {}
        indices = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    header[k.strip()] = v.strip()
                continue
            try:
                indices.append(int(line, 10))
            except ValueError:
                raise SelectionFormatError(f"line {lineno}: not a decimal index: {raw!r}") from None
        try:
            kw = dict(
                epoch=int(header.pop("epoch", 0)),
                rho=float(header.pop("rho", 1.0)),
                eta=float(header.pop("eta", 0.0)),
                seed=int(header.pop("seed", 0)),
                source_hash=header.pop("source_hash", ""),
            )
            sizes = header.pop("cluster_sizes", "")
            quotas = header.pop("quotas", "")
            kw["cluster_sizes"] = tuple(int(x) for x in sizes.split(",") if x)
            kw["quotas"] = tuple(int(x) for x in quotas.split(",") if x)
        except ValueError as exc:
            raise SelectionFormatError(f"bad provenance header: {exc}") from None
        try:
            return cls(np.array(indices, dtype=np.int64), extra=header, **kw)
        except ValueError as exc:
            raise SelectionFormatError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "Selection":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def full(cls, n: int, **provenance) -> "Selection":
        return cls(np.arange(n, dtype=np.int64), **provenance)


def source_hash(matrix: EmbeddingMatrix) -> str:
    """Short content hash of a feature matrix, recorded in selection provenance."""
    h = hashlib.sha256()
    h.update(np.asarray(matrix.values.shape, dtype="<u8").tobytes())
    h.update(matrix.values.astype("<f4").tobytes())
    return h.hexdigest()[:16]
