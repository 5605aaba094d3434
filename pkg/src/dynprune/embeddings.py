"""Embedding matrices and the EMB1 binary format.

EMB1 layout (all little-endian)::

    offset  size        field
    0       4           magic b"EMB1"
    4       2   u16     version (= 1)
    6       2   u16     flags: bit 0 labels present, bit 1 ids present
    8       8   u64     n (rows)
    16      4   u32     d (columns)
    20      4   u32     reserved (= 0)
    24      4*n*d f32   values, row-major
    ...     4*n   u32   labels (if flag bit 0)
    ...     8*n   u64   ids (if flag bit 1)
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import SeededRng

MAGIC = b"EMB1"
VERSION = 1
FLAG_LABELS = 0x1
FLAG_IDS = 0x2
HEADER = struct.Struct("<4sHHQII")
HEADER_SIZE = HEADER.size  # 24


class EmbFormatError(ValueError):
    """Malformed EMB1 input. ``offset`` is the byte offset of the problem."""

    kind = "format"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagicError(EmbFormatError):
    kind = "bad-magic"


class UnsupportedVersionError(EmbFormatError):
    kind = "unsupported-version"


class TruncatedError(EmbFormatError):
    kind = "truncated"


class NonFiniteValueError(EmbFormatError):
    kind = "non-finite"


class InvalidHeaderError(EmbFormatError):
    """Unknown flag bits, non-zero reserved field or duplicate ids."""

    kind = "invalid-header"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Immutable ``n x d`` float32 matrix with optional labels and ids."""

    values: np.ndarray
    labels: np.ndarray | None = None
    ids: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        values = values.astype(np.float32, copy=True)
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", _frozen(values))
        n = values.shape[0]
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise ValueError(f"labels must have shape ({n},), got {labels.shape}")
            if labels.size and (labels.min() < 0 or labels.max() > 0xFFFFFFFF):
                raise ValueError("labels must fit in u32")
            object.__setattr__(self, "labels", _frozen(labels.astype(np.int64)))
        if self.ids is not None:
            ids = np.asarray(self.ids)
            if ids.shape != (n,):
                raise ValueError(f"ids must have shape ({n},), got {ids.shape}")
            ids = ids.astype(np.uint64)
            if np.unique(ids).size != n:
                raise ValueError("ids must be unique")
            object.__setattr__(self, "ids", _frozen(ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def take(self, indices) -> "EmbeddingMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return EmbeddingMatrix(
            self.values[idx],
            None if self.labels is None else self.labels[idx],
            None if self.ids is None else self.ids[idx],
        )

    def __eq__(self, other):
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and a.tobytes() == b.tobytes()

        return (
            same(self.values, other.values)
            and same(self.labels, other.labels)
            and same(self.ids, other.ids)
        )

    __hash__ = None


def as_array(data) -> np.ndarray:
    """Float64 view of an EmbeddingMatrix or array-like, for computation."""
    if isinstance(data, EmbeddingMatrix):
        data = data.values
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def to_bytes(matrix: EmbeddingMatrix) -> bytes:
    flags = (FLAG_LABELS if matrix.labels is not None else 0) | (
        FLAG_IDS if matrix.ids is not None else 0
    )
    parts = [
        HEADER.pack(MAGIC, VERSION, flags, matrix.n, matrix.d, 0),
        matrix.values.astype("<f4").tobytes(),
    ]
    if matrix.labels is not None:
        parts.append(matrix.labels.astype("<u4").tobytes())
    if matrix.ids is not None:
        parts.append(matrix.ids.astype("<u8").tobytes())
    return b"".join(parts)


def save_embeddings(matrix: EmbeddingMatrix, destination) -> int:
    """Write ``matrix`` as EMB1 to a path or binary file object; returns bytes written."""
    buf = to_bytes(matrix)
    if isinstance(destination, (str, os.PathLike)):
        atomic_write(destination, buf)
    else:
        destination.write(buf)
    return len(buf)


def from_bytes(buf: bytes) -> EmbeddingMatrix:
    buf = memoryview(buf)
    if len(buf) < 4:
        raise TruncatedError(f"file is {len(buf)} bytes, shorter than the magic", len(buf))
    if bytes(buf[:4]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", 0)
    if len(buf) < HEADER_SIZE:
        raise TruncatedError(
            f"header needs {HEADER_SIZE} bytes, only {len(buf)} present", len(buf)
        )
    _, version, flags, n, d, reserved = HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}", 4)
    if flags & ~(FLAG_LABELS | FLAG_IDS):
        raise InvalidHeaderError(f"unknown flag bits 0x{flags:04x}", 6)
    if reserved != 0:
        raise InvalidHeaderError(f"reserved field is {reserved}, expected 0", 20)

    expected = n * d * 4
    if flags & FLAG_LABELS:
        expected += n * 4
    if flags & FLAG_IDS:
        expected += n * 8
    have = len(buf) - HEADER_SIZE
    if have < expected:
        raise TruncatedError(
            f"payload needs {expected} bytes for n={n}, d={d}, only {have} present",
            len(buf),
        )
    if have > expected:
        raise InvalidHeaderError(
            f"{have - expected} trailing bytes after payload", HEADER_SIZE + expected
        )

    off = HEADER_SIZE
    values = np.frombuffer(buf, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    bad = np.flatnonzero(~np.isfinite(values.ravel()))
    if bad.size:
        raise NonFiniteValueError(
            f"non-finite value {values.ravel()[bad[0]]} at element {bad[0]}",
            off + 4 * int(bad[0]),
        )
    off += n * d * 4
    labels = ids = None
    if flags & FLAG_LABELS:
        labels = np.frombuffer(buf, dtype="<u4", count=n, offset=off)
        off += n * 4
    if flags & FLAG_IDS:
        ids = np.frombuffer(buf, dtype="<u8", count=n, offset=off)
        if np.unique(ids).size != n:
            raise InvalidHeaderError("duplicate sample ids", off)
    return EmbeddingMatrix(values.astype(np.float32), labels, ids)


def load_embeddings(source) -> EmbeddingMatrix:
    """Parse EMB1 from a path, bytes, or binary file object."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        return from_bytes(bytes(source))
    if isinstance(source, (str, os.PathLike)):
        return from_bytes(Path(source).read_bytes())
    return from_bytes(source.read())


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temporary sibling file and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    mode = "wb" if isinstance(data, bytes) else "w"
    kwargs = {} if isinstance(data, bytes) else {"encoding": "utf-8", "newline": "\n"}
    with open(tmp, mode, **kwargs) as fh:
        fh.write(data)
    os.replace(tmp, path)


def check_index_subset(indices, n: int) -> np.ndarray:
    """Validate an index subset: sorted ascending, unique, each < n."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("index subset must be 1-D")
    if idx.size:
        if idx[0] < 0 or idx[-1] >= n:
            raise ValueError(f"indices out of range [0, {n})")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly ascending")
    return idx


def random_subset(n: int, n_c: int, rng: SeededRng) -> np.ndarray:
    """``n_c`` distinct indices from ``range(n)``, uniform without replacement, sorted.

    Partial Fisher-Yates: position i swaps with a uniform draw from [i, n).
    Only touched positions are stored, so memory is O(n_c).
    """
    if n_c < 1 or n_c > n:
        raise ValueError(f"need 1 <= n_c <= n, got n_c={n_c}, n={n}")
    picks = rng.gen.integers(np.arange(n_c, dtype=np.int64), n, dtype=np.int64)
    swapped: dict[int, int] = {}
    out = np.empty(n_c, dtype=np.int64)
    for i, j in enumerate(picks.tolist()):
        vi = swapped.get(i, i)
        vj = swapped.get(j, j)
        out[i] = vj
        swapped[j] = vi
    out.sort()
    return out

