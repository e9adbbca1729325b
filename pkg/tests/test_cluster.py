import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffsched.cluster import apportion, cluster_jobs, elbow, select, suggest_n_clusters
from helpers import job


def jobs_at(points):
    return [job(f"j{i}", float(x), float(y)) for i, (x, y) in enumerate(points)]


def partitions(n, k):
    """All labelings of n items into exactly k nonempty groups (canonical form)."""

    def rec(i, labels, used):
        if i == n:
            if used == k:
                yield tuple(labels)
            return
        for c in range(min(used + 1, k)):
            labels.append(c)
            yield from rec(i + 1, labels, max(used, c + 1))
            labels.pop()

    yield from rec(0, [], 0)


def brute_wcss(pts, k):
    best, arg = np.inf, None
    for lab in partitions(len(pts), k):
        lab = np.array(lab)
        w = sum(((pts[lab == c] - pts[lab == c].mean(axis=0)) ** 2).sum() for c in range(k))
        if w < best:
            best, arg = w, lab
    return best, arg


def same_grouping(a, b):
    return all((a[i] == a[j]) == (b[i] == b[j]) for i, j in itertools.combinations(range(len(a)), 2))


def test_one_cluster_per_job():
    pts = [(0, 0), (5, 1), (2, 9), (7, 7)]
    state = cluster_jobs(jobs_at(pts), 4)
    assert sorted(state.membership.values()) == [0, 1, 2, 3]
    got = sorted((c.x, c.y) for c in state.centroids)
    assert got == sorted((float(x), float(y)) for x, y in pts)


def test_single_cluster_centroid_is_mean():
    pts = [(0, 0), (4, 0), (2, 6), (10, 2)]
    state = cluster_jobs(jobs_at(pts), 1)
    assert state.centroids[0].x == pytest.approx(4.0)
    assert state.centroids[0].y == pytest.approx(2.0)


def test_too_many_clusters_rejected():
    with pytest.raises(ValueError):
        cluster_jobs(jobs_at([(0, 0), (1, 1)]), 3)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=4),
    st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=4),
    st.integers(0, 5),
)
def test_two_groups_match_optimal_two_means(g1, g2, seed):
    pts = np.array(g1 + [(x + 1000.0, y + 1000.0) for x, y in g2])
    state = cluster_jobs(jobs_at(pts), 2, seed)
    labels = [state.membership[f"j{i}"] for i in range(len(pts))]
    _, oracle = brute_wcss(pts, 2)
    assert same_grouping(labels, list(oracle))
    assert same_grouping(labels, [0] * len(g1) + [1] * len(g2))


def test_elbow_single_cloud():
    rng = np.random.default_rng(3)
    pts = rng.normal(0.0, 1e-6, size=(8, 2)) + 500.0
    # the enumerated WCSS curve is flat beyond k = 1 at the elbow's resolution
    w = [brute_wcss(pts, k)[0] for k in range(1, 5)]
    assert max(w) - min(w) < 1e-9
    assert suggest_n_clusters(jobs_at(pts), 4) == 1


def test_elbow_identical_points():
    assert suggest_n_clusters(jobs_at([(3.0, 3.0)] * 5), 4) == 1


def test_elbow_single_job():
    assert suggest_n_clusters(jobs_at([(1.0, 2.0)]), 10) == 1


def _oracle_elbow(w):
    padded = [w[0]] + list(w) + [w[-1]]
    d2 = [padded[k - 1] - 2 * padded[k] + padded[k + 1] for k in range(1, len(w) + 1)]
    return 1 + int(np.argmax(d2))


def test_elbow_three_clouds():
    rng = np.random.default_rng(0)
    centers = [(0, 0), (100, 0), (50, 90)]
    pts = np.vstack([rng.normal(c, 2.0, size=(3, 2)) for c in centers])
    # optimal WCSS for each k by enumerating every partition of the 9 points
    w = [brute_wcss(pts, k)[0] for k in range(1, 7)]
    assert _oracle_elbow(w) == 3
    assert suggest_n_clusters(jobs_at(pts), 6) == 3


def test_elbow_prefers_smallest_k_on_ties():
    assert elbow([10.0, 5.0, 0.0, 0.0]) == 3
    assert elbow([4.0, 4.0, 4.0]) == 1
    # second differences -5, 2, 2, 1: the tie between k=2 and k=3 goes low
    assert elbow([9.0, 4.0, 1.0, 0.0]) == 2


class TestApportion:
    def test_largest_remainder_ties_to_lower_index(self):
        assert apportion([6, 3, 1], 5) == [3, 2, 0]

    def test_exact_split(self):
        assert apportion([2, 2, 2], 3) == [1, 1, 1]

    def test_more_requested_than_available(self):
        assert apportion([1, 0, 2], 10) == [1, 0, 2]

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.integers(0, 30), min_size=1, max_size=8), st.integers(0, 60))
    def test_properties(self, counts, n):
        q = apportion(counts, n)
        assert sum(q) == min(n, sum(counts))
        assert all(0 <= a <= c for a, c in zip(q, counts))
        total = sum(counts)
        if total and n <= total:
            # each quota within one of the exact proportional share
            for a, c in zip(q, counts):
                assert abs(a - n * c / total) < 1


class TestSelect:
    def setup_method(self):
        rng = np.random.default_rng(7)
        pts = np.vstack([rng.uniform(0, 10, (6, 2)), rng.uniform(200, 210, (4, 2))])
        self.jobs = jobs_at(pts)

    def test_single_cluster_takes_nearest(self):
        state = cluster_jobs(self.jobs, 1)
        c = state.centroids[0]
        order = sorted(self.jobs, key=lambda j: (j.location.distance(c), j.id))
        assert select(state, 3) == [j.id for j in order[:3]]

    def test_all_when_asking_for_more(self):
        state = cluster_jobs(self.jobs, 2)
        assert sorted(select(state, 50)) == sorted(j.id for j in self.jobs)

    def test_empty_pool(self):
        state = cluster_jobs(self.jobs, 2)
        state.remove([j.id for j in self.jobs])
        assert select(state, 3) == []

    def test_deterministic_and_skips_removed(self):
        state = cluster_jobs(self.jobs, 2)
        first = select(state, 4)
        assert select(state, 4) == first
        state.remove(first[:2])
        again = select(state, 4)
        assert not set(first[:2]) & set(again)
        assert len(again) == 4

    def test_quota_follows_pool_sizes(self):
        state = cluster_jobs(self.jobs, 2)
        picked = select(state, 5)
        per = [sum(1 for j in picked if state.membership[j] == k) for k in range(2)]
        sizes = [len(p) for p in state.unassigned]
        assert per == apportion(sizes, 5)
