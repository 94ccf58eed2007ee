import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score, silhouette_score

from apalloc.cluster import (decompose, decomposition_mask, kmeans, route_terminals, silhouette,
                             silhouette_select, write_labels)
from apalloc.model import InitMode, OptimizerConfig, is_feasible
from apalloc.policies import solve, solve_distributed

from conftest import random_problem


def blobs(rng, centres, per=15, spread=1.0):
    pts = np.vstack([c + rng.normal(0, spread, size=(per, 2)) for c in centres])
    truth = np.repeat(np.arange(len(centres)), per)
    return pts, truth


class TestKMeans:
    def test_one_cluster_is_the_mean(self, rng):
        pts = rng.random((20, 2))
        res = kmeans(pts, 1)
        assert set(res.labels) == {0}
        assert res.centroids[0] == pytest.approx(pts.mean(axis=0))

    def test_two_separated_groups(self, rng):
        # groups of diameter ~4 placed 100 apart
        pts, truth = blobs(rng, [(0, 0), (100, 0)], spread=0.5)
        res = kmeans(pts, 2, seed=3)
        assert adjusted_rand_score(truth, res.labels) == 1.0
        nearest = np.argmin(((pts[:, None] - res.centroids[None]) ** 2).sum(axis=2), axis=1)
        assert np.array_equal(nearest, res.labels)

    def test_k_equals_n(self, rng):
        pts = rng.random((6, 2)) * 10
        res = kmeans(pts, 6)
        assert len(set(res.labels)) == 6 and res.inertia == pytest.approx(0.0)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((2, 2)), 3)

    def test_matches_sklearn_inertia(self, rng):
        pts, _ = blobs(rng, [(0, 0), (30, 0), (0, 30), (30, 30)], per=20, spread=3.0)
        ours = min(kmeans(pts, 4, seed=s).inertia for s in range(5))
        ref = KMeans(4, n_init=10, random_state=0).fit(pts).inertia_
        assert ours == pytest.approx(ref, rel=1e-6)

    @given(st.integers(0, 2**31 - 1), st.integers(1, 6))
    def test_inertia_never_increases(self, seed, k):
        pts = np.random.default_rng(seed).random((25, 2)) * 50
        hist = kmeans(pts, k, seed=seed).inertia_history
        assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


class TestSilhouette:
    @given(st.integers(0, 2**31 - 1), st.integers(2, 5))
    def test_matches_sklearn(self, seed, k):
        rng = np.random.default_rng(seed)
        pts = rng.random((20, 2))
        labels = np.arange(20) % k
        rng.shuffle(labels)
        assert silhouette(pts, labels) == pytest.approx(silhouette_score(pts, labels), abs=1e-12)

    def test_three_blobs(self, rng):
        pts, _ = blobs(rng, [(0, 0), (50, 0), (25, 40)])
        k, scores = silhouette_select(pts, range(2, 7))
        assert k == 3
        assert all(scores[3] > v for kk, v in scores.items() if kk != 3)

    def test_two_blobs(self, rng):
        pts, _ = blobs(rng, [(0, 0), (60, 10)])
        assert silhouette_select(pts, range(2, 7))[0] == 2

    def test_identical_points(self):
        with pytest.raises(ValueError):
            silhouette_select(np.ones((10, 2)), range(2, 4))

    def test_empty_range(self, rng):
        with pytest.raises(ValueError):
            silhouette_select(rng.random((10, 2)), [])


class TestDecompose:
    def test_one_cluster_is_identity(self, rng):
        p = random_problem(rng, 5, 3)
        route = np.zeros(5, dtype=np.int64)
        (sub,) = decompose(p, np.zeros(3), route)
        assert np.array_equal(sub.problem.q, p.q)
        assert np.array_equal(sub.rows, np.arange(5))

    def test_single_cluster_equals_centralized(self, rng):
        p = random_problem(rng, 6, 4, tight=False)
        c = OptimizerConfig(iterations=10, init_mode=InitMode.EMPTY)
        a, fit, _, _ = solve_distributed(p, np.zeros(4), c, rng=np.random.default_rng(5),
                                         route=np.zeros(6, dtype=np.int64))
        ref = solve(p, c, rng=np.random.default_rng(5).spawn(1)[0])
        assert a == ref.assignment and fit == pytest.approx(ref.fitness)

    def test_routing(self):
        q = np.array([[0.02, 0.0, 0.0], [0.0, 0.01, 0.03], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        labels = np.array([0, 1, 1])
        pos = np.array([[0, 0], [0, 0], [9.0, 9.0], [np.nan, np.nan]])
        ap_pos = np.array([[0, 0], [10, 10], [8, 8]])
        assert route_terminals(q, labels, pos, ap_pos).tolist() == [0, 1, 1, -1]

    @given(st.integers(0, 2**31 - 1), st.integers(1, 3))
    def test_partition_and_feasible_union(self, seed, k):
        rng = np.random.default_rng(seed)
        p = random_problem(rng, 6, 4)
        labels = np.arange(4) % k
        c = OptimizerConfig(iterations=5, init_mode=InitMode.EMPTY)
        a, fit, subs, restricted = solve_distributed(p, labels, c, rng=rng)
        cols = np.concatenate([s.ap_cols for s in subs])
        assert sorted(cols.tolist()) == list(range(4))
        rows = np.concatenate([s.rows for s in subs])
        assert len(rows) == len(set(rows.tolist()))
        assert is_feasible(a, restricted)
        assert fit == pytest.approx(sum(p.q[i, a.ap[i]] * p.rate[i] for i in np.flatnonzero(a.ap >= 0)))

    def test_labels_csv(self):
        buf = io.StringIO()
        write_labels(buf, [7, 8], [0, 1], [(1.0, 2.0), (3.0, 4.0)])
        assert buf.getvalue().splitlines() == ["ap_id,cluster_id,x,y", "7,0,1.0,2.0", "8,1,3.0,4.0"]
