import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from dynprune.embeddings import (
    HEADER_SIZE,
    BadMagicError,
    EmbeddingMatrix,
    InvalidHeaderError,
    NonFiniteValueError,
    TruncatedError,
    UnsupportedVersionError,
    check_index_subset,
    load_embeddings,
    random_subset,
    save_embeddings,
    to_bytes,
)
from dynprune.rng import SeededRng


def header(n, d, flags=0, version=1, magic=b"EMB1", reserved=0):
    return struct.pack("<4sHHQII", magic, version, flags, n, d, reserved)


def roundtrip(m):
    buf = io.BytesIO()
    save_embeddings(m, buf)
    return load_embeddings(io.BytesIO(buf.getvalue()))


def test_smallest_file_is_28_bytes():
    buf = io.BytesIO()
    written = save_embeddings(EmbeddingMatrix(np.zeros((1, 1))), buf)
    assert written == 28
    assert HEADER_SIZE == 4 + 2 + 2 + 8 + 4 + 4
    assert buf.getvalue()[:4] == b"EMB1"
    assert buf.getvalue()[6:8] == b"\x00\x00"  # no label block


def test_roundtrip_with_labels():
    m = EmbeddingMatrix(np.arange(6, dtype=np.float32).reshape(3, 2), labels=[0, 1, 1])
    back = roundtrip(m)
    assert back == m
    assert back.labels.tolist() == [0, 1, 1]


def test_roundtrip_with_ids_and_labels():
    m = EmbeddingMatrix(np.ones((4, 3)), labels=[3, 2, 1, 0], ids=[10, 2**63, 7, 0])
    assert roundtrip(m) == m


def test_large_random_matrix_is_bit_exact():
    rng = np.random.default_rng(0)
    m = EmbeddingMatrix(rng.standard_normal((1000, 16)).astype(np.float32))
    first = to_bytes(m)
    back = load_embeddings(first)
    assert back.values.tobytes() == m.values.tobytes()
    assert to_bytes(back) == first


def test_path_roundtrip(tmp_path):
    m = EmbeddingMatrix(np.eye(3), labels=[0, 1, 2])
    save_embeddings(m, tmp_path / "m.emb")
    assert load_embeddings(tmp_path / "m.emb") == m


@settings(max_examples=50, deadline=None)
@given(
    hnp.arrays(
        np.float32,
        st.tuples(st.integers(0, 6), st.integers(0, 5)),
        elements=st.floats(-1.0000000150474662e30, 1.0000000150474662e30, width=32, allow_nan=False, allow_infinity=False, allow_subnormal=False),
    ),
    st.booleans(),
)
def test_roundtrip_property(values, with_labels):
    labels = np.arange(values.shape[0]) % 3 if with_labels else None
    m = EmbeddingMatrix(values, labels)
    assert roundtrip(m) == m


def test_negative_zero_survives():
    m = EmbeddingMatrix(np.array([[-0.0, 0.0]], dtype=np.float32))
    assert roundtrip(m).values.tobytes() == m.values.tobytes()


def test_bad_magic():
    with pytest.raises(BadMagicError) as exc:
        load_embeddings(b"XEMB" + b"\x00" * 40)
    assert exc.value.offset == 0


def test_truncated_payload_reports_expected_bytes():
    buf = header(10, 4) + b"\x00" * 100
    with pytest.raises(TruncatedError, match="160"):
        load_embeddings(buf)


def test_unsupported_version():
    with pytest.raises(UnsupportedVersionError) as exc:
        load_embeddings(header(1, 1, version=2) + b"\x00" * 4)
    assert exc.value.offset == 4


def test_non_finite_value_names_offset():
    payload = np.array([1.0, np.nan, 2.0], dtype="<f4").tobytes()
    with pytest.raises(NonFiniteValueError) as exc:
        load_embeddings(header(1, 3) + payload)
    assert exc.value.offset == HEADER_SIZE + 4


def test_unknown_flags_and_reserved():
    with pytest.raises(InvalidHeaderError):
        load_embeddings(header(1, 1, flags=4) + b"\x00" * 4)
    with pytest.raises(InvalidHeaderError):
        load_embeddings(header(1, 1, reserved=1) + b"\x00" * 4)


def test_duplicate_ids_rejected():
    ids = np.array([5, 5], dtype="<u8").tobytes()
    with pytest.raises(InvalidHeaderError):
        load_embeddings(header(2, 1, flags=2) + b"\x00" * 8 + ids)


def test_matrix_invariants():
    with pytest.raises(ValueError):
        EmbeddingMatrix(np.array([[np.inf]]))
    with pytest.raises(ValueError):
        EmbeddingMatrix(np.zeros((2, 2)), labels=[1])
    with pytest.raises(ValueError):
        EmbeddingMatrix(np.zeros((2, 2)), ids=[1, 1])
    m = EmbeddingMatrix(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        m.values[0, 0] = 1.0


def test_random_subset_all_and_too_many():
    assert random_subset(5, 5, SeededRng(1)).tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        random_subset(5, 6, SeededRng(1))
    with pytest.raises(ValueError):
        random_subset(5, 0, SeededRng(1))


def test_random_subset_deterministic_and_valid():
    a = random_subset(10_000, 1_000, SeededRng(42))
    b = random_subset(10_000, 1_000, SeededRng(42))
    assert np.array_equal(a, b)
    check_index_subset(a, 10_000)
    assert a.size == 1_000


def test_random_subset_marginal_uniformity():
    rng = SeededRng(2024)
    counts = np.zeros(10)
    for _ in range(10_000):
        counts[random_subset(10, 3, rng)] += 1
    freq = counts / 10_000
    assert np.all(np.abs(freq - 0.3) <= 0.02), freq


def test_check_index_subset_rejects_bad_input():
    with pytest.raises(ValueError):
        check_index_subset([0, 0, 1], 3)
    with pytest.raises(ValueError):
        check_index_subset([2, 1], 3)
    with pytest.raises(ValueError):
        check_index_subset([0, 3], 3)
