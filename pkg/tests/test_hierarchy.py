import numpy as np
import pytest

from dynprune.hierarchy import ClusterModel, final_level, hkmeans
from dynprune.kmeans import kmeans
from dynprune.rng import SeededRng


def blobs_two_pairs(seed=0, per=40):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [0, 3], [100, 0], [100, 3]], dtype=float)
    pts = [c + 0.1 * rng.standard_normal((per, 2)) for c in centers]
    return np.vstack(pts), pts


def test_single_level_equals_plain_kmeans():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((100, 3))
    model = hkmeans(X, (5,), SeededRng(3))
    plain = kmeans(X, 5, SeededRng(3).split("level", 0))
    assert np.array_equal(final_level(model), plain.centroids)


def test_two_level_pairs_collapse_to_midpoints():
    X, pts = blobs_two_pairs()
    model = hkmeans(X, (4, 2), SeededRng(0), tol=0.0)
    means = np.array([p.mean(axis=0) for p in pts])
    level1 = model.levels[0][np.lexsort(model.levels[0].T[::-1])]
    assert np.allclose(level1, means[np.lexsort(means.T[::-1])], atol=1e-6)
    mids = np.array([(means[0] + means[1]) / 2, (means[2] + means[3]) / 2])
    top = final_level(model)
    top = top[np.argsort(top[:, 0])]
    assert np.allclose(top, mids, atol=1e-6)


def test_top_level_of_one_is_mean_of_children():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((80, 2))
    model = hkmeans(X, (6, 1), SeededRng(1))
    assert np.allclose(final_level(model)[0], model.levels[0].mean(axis=0))


def test_shapes_and_final_level():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((200, 5))
    model = hkmeans(X, (8, 4, 2), SeededRng(2), restarts=2)
    assert [C.shape for C in model.levels] == [(8, 5), (4, 5), (2, 5)]
    assert final_level(model) is model.levels[2]


def test_nesting_inside_parent_bounding_box():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((300, 3)) * [1, 5, 0.2]
    model = hkmeans(X, (16, 6, 3), SeededRng(5), restarts=3)
    for lower, upper in zip(model.levels, model.levels[1:]):
        lo, hi = lower.min(axis=0), lower.max(axis=0)
        assert np.all(upper >= lo - 1e-12) and np.all(upper <= hi + 1e-12)


def test_deterministic_by_seed():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((150, 4))
    a = hkmeans(X, (10, 3), SeededRng(8), restarts=2)
    b = hkmeans(X, (10, 3), SeededRng(8), restarts=2)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.levels, b.levels))


def test_weighted_flag_changes_upper_level():
    X = np.vstack([np.zeros((90, 1)), np.ones((10, 1)) * 10.0])
    X = X + np.linspace(0, 1e-3, 100)[:, None]
    un = hkmeans(X, (2, 1), SeededRng(0))
    w = hkmeans(X, (2, 1), SeededRng(0), weighted=True)
    assert final_level(un)[0, 0] == pytest.approx(5.0, abs=0.01)
    assert final_level(w)[0, 0] == pytest.approx(1.0, abs=0.01)


def test_invalid_ks():
    X = np.zeros((5, 2))
    with pytest.raises(ValueError):
        hkmeans(X, (2, 3), SeededRng(0))
    with pytest.raises(ValueError):
        hkmeans(X, (6,), SeededRng(0))
    with pytest.raises(ValueError):
        hkmeans(X, (), SeededRng(0))


def test_save_and_load(tmp_path):
    rng = np.random.default_rng(7)
    X = rng.standard_normal((60, 3)).astype(np.float32)
    model = hkmeans(X, (6, 2), SeededRng(1), restarts=2)
    model.save(tmp_path)
    back = ClusterModel.load(tmp_path)
    assert back.params == model.params
    for a, b in zip(model.levels, back.levels):
        assert np.allclose(a, b, rtol=1e-6)
