import hashlib

import numpy as np
import pytest

from dynprune.rng import SeededRng, as_rng


def test_same_seed_same_stream():
    a = SeededRng(7).gen.integers(0, 2**63, size=100)
    b = SeededRng(7).gen.integers(0, 2**63, size=100)
    assert np.array_equal(a, b)


def test_different_seeds_differ():
    a = SeededRng(7).gen.random(100)
    b = SeededRng(8).gen.random(100)
    assert not np.array_equal(a, b)


def test_split_ignores_parent_consumption():
    parent = SeededRng(3)
    before = parent.split("prune", 4).gen.random(10)
    parent.gen.random(1000)
    after = parent.split("prune", 4).gen.random(10)
    assert np.array_equal(before, after)


def test_substreams_do_not_collide():
    root = SeededRng(11)
    a = root.split("prune").gen.integers(0, 2**64, size=1000, dtype=np.uint64)
    b = root.split("train").gen.integers(0, 2**64, size=1000, dtype=np.uint64)
    c = root.split("prune", 1).gen.integers(0, 2**64, size=1000, dtype=np.uint64)
    assert np.all(a != b)
    assert np.all(a != c)
    assert len(np.intersect1d(a, b)) == 0


def test_key_derivation_rebuilt_by_hand():
    key = hashlib.blake2b((3).to_bytes(8, "little") + b"prune:4", digest_size=16).digest()
    ref = np.random.Generator(np.random.Philox(key=np.frombuffer(key, dtype="<u8")))
    assert np.array_equal(SeededRng(3).split("prune", 4).gen.random(5), ref.random(5))


def test_known_outputs_are_pinned():
    # guards against silent changes to key derivation or the generator
    assert int(SeededRng(0).gen.integers(0, 2**64, dtype=np.uint64)) == 9677058930924629489
    assert int(SeededRng(0).split("prune", 3).gen.integers(0, 2**64, dtype=np.uint64)) == 588164200441198105


def test_seed_bounds_and_tags():
    with pytest.raises(ValueError):
        SeededRng(-1)
    with pytest.raises(ValueError):
        SeededRng(2**64)
    with pytest.raises(ValueError):
        SeededRng(1).split("a/b")
    assert as_rng(5).seed == 5
    with pytest.raises(TypeError):
        as_rng("5")
