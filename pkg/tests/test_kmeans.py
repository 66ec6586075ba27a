import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clustercomm.kmeans import (CentroidTable, NotInitializedError, TooFewSamplesError, assign,
                                index_stability, init_centroids, kmeans_objective, lloyd,
                                minibatch_update)

from oracles import brute_force_assign


def table_from(centroids, counts=None):
    c = np.asarray(centroids, dtype=np.float64)
    k, d = c.shape
    return CentroidTable(k, d, c.copy(),
                         np.zeros(k, np.int64) if counts is None else np.asarray(counts, np.int64),
                         True)


def test_table_requires_two_centroids():
    with pytest.raises(ValueError):
        CentroidTable(1, 3)


def test_init_with_k_distinct_points_returns_them():
    pts = np.array([[0.0, 0], [1, 0], [0, 1], [5, 5]])
    table = init_centroids(pts, 4, np.random.default_rng(0))
    assert sorted(map(tuple, table.centroids)) == sorted(map(tuple, pts))
    assert table.initialized and np.all(table.counts == 0)


def test_init_duplicate_heavy_picks_distinct():
    rng = np.random.default_rng(1)
    base = rng.standard_normal((5, 3))
    for seed in range(50):
        pts = base[np.random.default_rng(seed).integers(5, size=200)]
        pts[:5] = base  # every distinct value present
        table = init_centroids(pts, 5, np.random.default_rng(seed))
        assert len({tuple(c) for c in table.centroids}) == 5


def test_init_is_deterministic_and_checks_size():
    pts = np.random.default_rng(0).standard_normal((30, 4))
    a = init_centroids(pts, 6, np.random.default_rng(3))
    b = init_centroids(pts, 6, np.random.default_rng(3))
    assert a.centroids.tobytes() == b.centroids.tobytes()
    with pytest.raises(TooFewSamplesError, match="defer"):
        init_centroids(pts[:3], 6, np.random.default_rng(0))


def test_assign_examples():
    t = table_from([[0, 0], [10, 10]])
    assert assign(np.array([1.0, 1.0]), t) == 0
    t = table_from([[5, 5], [0, 1], [9, 9], [0, -1]])
    assert assign(np.zeros(2), t) == 1  # tie between 1 and 3
    with pytest.raises(NotInitializedError):
        assign(np.zeros(2), CentroidTable(2, 2))


def test_assign_matches_brute_force_on_ten_thousand_queries():
    rng = np.random.default_rng(42)
    mismatches = 0
    for trial in range(10):
        k, d = rng.integers(2, 17), rng.integers(1, 9)
        t = table_from(rng.standard_normal((k, d)))
        queries = rng.standard_normal((1000, d)) * 2
        got = assign(queries, t)
        for q, g in zip(queries, got):
            mismatches += g != brute_force_assign(q, t.centroids)
    assert mismatches == 0


def test_minibatch_hand_computation_counts_0_1_2():
    m, p = np.array([2.0, 4.0]), np.array([6.0, 0.0])
    far = np.array([100.0, 100.0])
    # count 0 -> eta 1: centroid jumps onto p
    t = table_from([m, far], [0, 0])
    minibatch_update(t, [p])
    np.testing.assert_array_equal(t.centroids[0], p)
    # count 1 -> eta 1/2
    t = table_from([m, far], [1, 0])
    minibatch_update(t, [p])
    np.testing.assert_allclose(t.centroids[0], (m + p) / 2)
    # count 2 -> eta 1/3
    t = table_from([m, far], [2, 0])
    minibatch_update(t, [p])
    np.testing.assert_allclose(t.centroids[0], (2 * m + p) / 3)
    assert list(t.counts) == [3, 0]


def test_minibatch_is_sequential():
    t = table_from([[0.0], [10.0]])
    minibatch_update(t, [[4.0], [6.0]])
    # 4 -> c0 becomes 4; 6 is now nearer 4 than 10
    np.testing.assert_allclose(t.centroids[:, 0], [5.0, 10.0])
    assert list(t.counts) == [2, 0]


def test_minibatch_skips_non_finite():
    t = table_from([[0.0], [10.0]])
    minibatch_update(t, [[np.nan], [1.0], [np.inf]])
    assert t.skipped == 2 and list(t.counts) == [1, 0]
    with pytest.raises(ValueError):
        minibatch_update(t, np.zeros((0, 1)))


@settings(max_examples=60, deadline=None)
@given(data=arrays(np.float64, st.tuples(st.integers(1, 40), st.just(2)),
                   elements=st.floats(-50, 50)),
       seed=st.integers(0, 2 ** 16))
def test_counts_track_assignments(data, seed):
    rng = np.random.default_rng(seed)
    t = table_from(rng.standard_normal((3, 2)))
    expected = np.zeros(3, np.int64)
    before = t.counts.copy()
    for x in data:
        expected[assign(x, t)] += 1
        minibatch_update(t, [x])
    assert np.array_equal(t.counts, expected)
    assert np.all(t.counts >= before)
    assert np.all(np.isfinite(t.centroids))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 16))
def test_update_is_deterministic(seed):
    rng = np.random.default_rng(seed)
    base = table_from(rng.standard_normal((4, 3)))
    batch = rng.standard_normal((20, 3))
    a, b = minibatch_update(base.copy(), batch), minibatch_update(base.copy(), batch)
    assert a.centroids.tobytes() == b.centroids.tobytes()


def test_lloyd_hand_example():
    pts = np.array([[0.0, 0], [0, 1], [10, 10], [10, 11]])
    for seed in range(10):
        res = lloyd(pts, 2, 5, np.random.default_rng(seed))
        got = sorted(map(tuple, res.table.centroids))
        assert got == [(0.0, 0.5), (10.0, 10.5)]


def test_lloyd_k_equals_n_has_zero_objective():
    pts = np.random.default_rng(0).standard_normal((6, 2))
    assert lloyd(pts, 6, 3, np.random.default_rng(0)).objectives[-1] == 0.0


def test_lloyd_objective_non_increasing_on_fifty_instances():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n, k, d = rng.integers(10, 200), rng.integers(2, 9), rng.integers(1, 6)
        pts = rng.standard_normal((n, d)) * rng.uniform(0.1, 5)
        res = lloyd(pts, k, 15, rng)
        obj = np.array(res.objectives)
        assert np.all(np.diff(obj) <= 1e-9 * max(1.0, obj[0]))


def test_lloyd_empty_cluster_reseeds():
    # duplicates force an empty cluster on the first pass for some seeds
    pts = np.array([[0.0], [0.0], [0.0], [1.0], [50.0]])
    for seed in range(20):
        res = lloyd(pts, 3, 5, np.random.default_rng(seed))
        assert kmeans_objective(pts, res.table.centroids) <= res.objectives[0] + 1e-12


def test_index_stability_measurement():
    rng = np.random.default_rng(0)
    pts = np.concatenate([rng.normal(c, 0.3, size=(100, 2)) for c in [(0, 0), (5, 0), (0, 5)]])
    t = init_centroids(pts, 3, rng)
    minibatch_update(t, pts)
    after = minibatch_update(t.copy(), rng.permutation(pts)[:50])
    s = index_stability(t, after, pts)
    assert 0.0 <= s <= 1.0
    assert index_stability(t, t, pts) == 1.0
