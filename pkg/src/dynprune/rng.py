"""Seeded, splittable random streams.

Every stream is numpy's Philox4x64-10 counter-based generator. The 128-bit
Philox key is the first 16 bytes of BLAKE2b(seed as little-endian u64 ||
"/"-joined path), where the path is the chain of ``tag:epoch`` labels used to
split the stream. Philox advances by incrementing a 256-bit counter, so the
bit stream for a given key is identical on every platform.

Substreams depend only on (seed, path), never on how much of the parent
stream was consumed, so parallel workers can derive theirs up front.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "philox4x64-10"
_U64 = (1 << 64) - 1


def _derive_key(seed: int, path: tuple[str, ...]) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(8, "little"))
    h.update("/".join(path).encode("utf-8"))
    return np.frombuffer(h.digest(), dtype="<u8").astype(np.uint64)


class SeededRng:
    """A single-owner random stream identified by ``(seed, path)``."""

    algorithm = ALGORITHM

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        seed = int(seed)
        if seed < 0 or seed > _U64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.path = tuple(path)
        self.gen = np.random.Generator(np.random.Philox(key=_derive_key(seed, self.path)))

    def split(self, tag: str, epoch: int = 0) -> "SeededRng":
        """Independent child stream for ``tag`` at ``epoch``."""
        if "/" in tag:
            raise ValueError("tags may not contain '/'")
        return SeededRng(self.seed, self.path + (f"{tag}:{int(epoch)}",))

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, path={'/'.join(self.path)!r})"


def as_rng(rng) -> SeededRng:
    if isinstance(rng, SeededRng):
        return rng
    if isinstance(rng, (int, np.integer)):
        return SeededRng(int(rng))
    raise TypeError(f"expected SeededRng or integer seed, got {type(rng).__name__}")
