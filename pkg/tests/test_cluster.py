import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from helpers import oracle_optimal_sse
from mobiscope import _kernels
from mobiscope.cluster import (
    SseCurve,
    adjusted_rand_index,
    kmeans,
    lloyd,
    kmeans_pp_init,
    pearson_r,
    restart_rng,
    sse_curve,
    suggest_k,
)
from mobiscope.errors import ParameterError, ShapeError, UndefinedCorrelationError


def _two_groups(seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.01, (10, 20))
    b = 1.0 + rng.normal(0.0, 0.01, (10, 20))
    return np.vstack([a, b]), a, b


def _within(X):
    return float(((X - X.mean(axis=0)) ** 2).sum())


def test_two_groups_recovered():
    X, a, b = _two_groups()
    m = kmeans(X, 2, seed=1)
    cents = sorted(m.centroids.tolist(), key=lambda c: c[0])
    np.testing.assert_allclose(cents[0], a.mean(axis=0), atol=0.02)
    np.testing.assert_allclose(cents[1], b.mean(axis=0), atol=0.02)
    # with groups this far apart the best partition is the group split
    assert m.sse == pytest.approx(_within(a) + _within(b), abs=1e-9)


def test_k1_is_global_mean():
    X, _, _ = _two_groups(3)
    m = kmeans(X, 1, seed=0)
    np.testing.assert_allclose(m.centroids[0], X.mean(axis=0), atol=1e-12)
    assert m.sse == pytest.approx(X.var(axis=0).sum() * len(X), rel=1e-12)


def test_k_equals_n():
    X = np.random.default_rng(0).random((6, 20))
    m = kmeans(X, 6, seed=0)
    assert m.sse == 0.0
    assert sorted(m.labels.tolist()) == list(range(6))


def test_errors():
    X = np.random.default_rng(0).random((4, 3))
    with pytest.raises(ParameterError):
        kmeans(X, 5)
    with pytest.raises(ShapeError):
        kmeans([[0.0, 1.0], [1.0]], 1)
    with pytest.raises(ParameterError):
        kmeans(X, 2, restarts=0)


@pytest.mark.parametrize("seed", range(5))
def test_model_invariants(seed):
    X = np.random.default_rng(seed).random((30, 20))
    m = kmeans(X, 4, seed=seed, restarts=10)
    labels, d2 = _kernels.assign_nearest(X, m.centroids)
    # fixed point: nearest-centroid reassignment changes nothing
    np.testing.assert_array_equal(labels, m.labels)
    assert m.sse == pytest.approx(float(d2.sum()), rel=1e-12)
    for c in range(4):
        members = X[m.labels == c]
        if len(members):
            np.testing.assert_allclose(m.centroids[c], members.mean(axis=0), atol=1e-9)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(m.sse_history, m.sse_history[1:]))


def test_determinism_and_restart_streams():
    X = np.random.default_rng(9).random((25, 20))
    a = kmeans(X, 3, seed=5)
    b = kmeans(X, 3, seed=5)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    # each restart's init is reproducible in isolation
    c1 = kmeans_pp_init(X, 3, restart_rng(5, 7))
    c2 = kmeans_pp_init(X, 3, restart_rng(5, 7))
    np.testing.assert_array_equal(c1, c2)


def test_empty_cluster_reseeded():
    X = np.array([[0.0], [0.1], [10.0], [10.1]])
    C = np.array([[0.0], [100.0]])
    C, labels, sse, _, _ = lloyd(X, C)
    assert set(labels.tolist()) == {0, 1}
    assert sse == pytest.approx(0.01, abs=1e-12)


def test_best_of_restarts_hits_exhaustive_optimum():
    """n <= 12, k <= 3: optimum reached on at least 95 of 100 instances."""
    rng = np.random.default_rng(2024)
    hits = 0
    for i in range(100):
        n = int(rng.integers(4, 13))
        k = int(rng.integers(1, 4))
        X = rng.random((n, 20))
        if i % 2:
            # clustered instances as well as uniform ones
            X = X * 0.2 + rng.integers(0, 3, n)[:, None]
        m = kmeans(X, k, seed=i, restarts=50)
        if abs(m.sse - oracle_optimal_sse(X, k)) <= 1e-9:
            hits += 1
    assert hits >= 95


def test_sse_curve_examples():
    X = np.random.default_rng(1).random((8, 20))
    curve = sse_curve(X, 1, 8, seed=0, restarts=20)
    assert curve.points[-1] == (8, 0.0)
    sse = [s for _, s in curve.points]
    assert all(b <= a + 1e-12 for a, b in zip(sse, sse[1:]))
    same = sse_curve(np.ones((6, 20)), 1, 6, restarts=5)
    assert all(s == 0.0 for _, s in same.points)
    with pytest.raises(ParameterError):
        sse_curve(X, 1, 9)


def test_sse_curve_elbow_on_three_groups():
    rng = np.random.default_rng(4)
    centers = np.eye(3, 20)
    X = np.vstack([c + rng.normal(0, 0.02, (12, 20)) for c in centers])
    assert suggest_k(sse_curve(X, 1, 10, seed=0, restarts=20)) == 3


def test_suggest_k_examples():
    bent = SseCurve(((1, 100.0), (2, 60.0), (3, 20.0), (4, 17.0), (5, 14.0), (6, 11.0)))
    assert suggest_k(bent) == 3
    linear = SseCurve(tuple((k, 10.0 - k) for k in range(1, 7)))
    assert suggest_k(linear) == 2
    with pytest.raises(ParameterError):
        suggest_k(SseCurve(((1, 1.0), (2, 0.0))))


def test_pearson_examples():
    x = np.arange(10.0)
    assert pearson_r(x, x, perm=0)[0] == pytest.approx(1.0, abs=1e-12)
    assert pearson_r(x, -x, perm=0)[0] == pytest.approx(-1.0, abs=1e-12)
    assert pearson_r([1, 2, 3, 4], [1, 3, 2, 4], perm=0)[0] == pytest.approx(0.8, abs=1e-9)
    with pytest.raises(UndefinedCorrelationError):
        pearson_r([1, 1, 1, 1], [1, 2, 3, 4])
    with pytest.raises(ShapeError):
        pearson_r([1, 2, 3], [1, 2])


def test_pearson_permutation_p():
    rng = np.random.default_rng(0)
    x = rng.random(40)
    r, p = pearson_r(x, x + rng.normal(0, 0.05, 40), perm=2000, seed=1)
    assert r > 0.9 and p == pytest.approx(1 / 2001)
    r, p = pearson_r(x, rng.random(40), perm=2000, seed=1)
    assert p > 0.01
    # same seed, same p
    assert pearson_r(x, x**2, perm=500, seed=3) == pearson_r(x, x**2, perm=500, seed=3)


@settings(max_examples=100)
@given(
    st.lists(st.floats(-100, 100), min_size=3, max_size=30),
    st.floats(0.01, 100),
    st.floats(-100, 100),
    st.floats(0.01, 100),
    st.floats(-100, 100),
    st.integers(0, 2**31),
)
def test_pearson_affine_invariance(xs, a, b, c, d, seed):
    x = np.array(xs)
    y = np.random.default_rng(seed).random(x.size)
    if np.ptp(x) < 1e-3:
        return
    r0, _ = pearson_r(x, y, perm=0)
    r1, _ = pearson_r(a * x + b, c * y + d, perm=0)
    assert r1 == pytest.approx(r0, abs=1e-10)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=2, max_size=40))
def test_ari_matches_reference(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)


def test_ari_label_permutation():
    assert adjusted_rand_index([0, 0, 1, 1, 2], [2, 2, 0, 0, 1]) == 1.0
