import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldp_lab.clustering import kmeans, kmeans_1d_exact, match_labels, spectral_embedding


def _sse(x, labels):
    return sum(((x[labels == c] - x[labels == c].mean()) ** 2).sum() for c in np.unique(labels))


def brute_contiguous(x, k):
    """Best SSE over every split of sorted x into at most k contiguous runs."""
    xs = np.sort(x)
    n = xs.size
    best = np.inf
    for m in range(1, min(k, n) + 1):
        for cuts in itertools.combinations(range(1, n), m - 1):
            edges = (0,) + cuts + (n,)
            cost = sum(((xs[a:b] - xs[a:b].mean()) ** 2).sum() for a, b in zip(edges, edges[1:]))
            best = min(best, cost)
    return best


def brute_all_labelings(x, k):
    n = x.size
    return min(_sse(x, np.array(lab)) for lab in itertools.product(range(k), repeat=n))


def test_kmeans_blocks():
    r = kmeans([0, 0, 10, 10], 2, seed=3)
    assert r.inertia == 0
    assert r.labels[0] == r.labels[1] != r.labels[2] == r.labels[3]


def test_kmeans_k_equals_n():
    pts = np.random.default_rng(1).random((7, 2))
    assert kmeans(pts, 7).inertia == pytest.approx(0, abs=1e-20)


def test_kmeans_deterministic():
    pts = np.random.default_rng(2).normal(size=(60, 3))
    a, b = kmeans(pts, 4, seed=9), kmeans(pts, 4, seed=9)
    assert (a.labels == b.labels).all() and a.inertia == b.inertia


def test_kmeans_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((0, 2)), 1)
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4)


def test_1d_examples():
    r = kmeans_1d_exact([1, 2, 100, 101], 2)
    assert r.labels.tolist() == [0, 0, 1, 1]
    assert r.inertia == pytest.approx(1.0)
    r = kmeans_1d_exact([5, 5, 5, 5], 2)
    assert r.inertia == 0 and len(set(r.labels.tolist())) == 1


def test_1d_vs_contiguous_and_lloyd():
    rng = np.random.default_rng(7)
    for _ in range(10):
        x = rng.normal(size=20) * rng.choice([1, 5])
        for k in (2, 3):
            r = kmeans_1d_exact(x, k)
            assert r.inertia == pytest.approx(brute_contiguous(x, k), rel=1e-9, abs=1e-12)
            assert r.inertia <= kmeans(x, k, restarts=50).inertia * (1 + 1e-9) + 1e-12
            assert r.inertia == pytest.approx(_sse(x, r.labels), rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=7), st.integers(1, 3))
def test_1d_matches_exhaustive(vals, k):
    x = np.array(vals, dtype=float)
    k = min(k, x.size)
    r = kmeans_1d_exact(x, k)
    assert r.inertia == pytest.approx(brute_all_labelings(x, k), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=8, max_size=12), st.integers(2, 4))
def test_1d_matches_contiguous_up_to_12(vals, k):
    x = np.array(vals)
    assert kmeans_1d_exact(x, k).inertia == pytest.approx(brute_contiguous(x, k), rel=1e-9, abs=1e-9)


def test_spectral_embedding_blocks():
    A = np.zeros((6, 6))
    A[:3, :3] = 10
    A[3:, 3:] = 10
    emb = spectral_embedding(A, 2)
    assert emb.shape == (6, 2)
    lab = kmeans(emb, 2).labels
    assert match_labels(lab, [0, 0, 0, 1, 1, 1], 2)[0] == 1.0


def test_spectral_order_and_sign():
    A = np.diag([1.0, -5.0, 3.0, 5.0])
    emb = spectral_embedding(A, 3)
    # |5| tie: +5 first, then -5, then 3
    assert np.argmax(np.abs(emb[:, 0])) == 3
    assert np.argmax(np.abs(emb[:, 1])) == 1
    assert np.argmax(np.abs(emb[:, 2])) == 2
    assert (emb.max(axis=0) > 0).all()


def test_match_labels_examples():
    assert match_labels([0, 1, 0, 1], [0, 1, 0, 1], 2)[0] == 1.0
    assert match_labels([1, 0, 1, 0], [0, 1, 0, 1], 2)[0] == 1.0
    assert match_labels([0, 0, 1, 0], [0, 0, 1, 1], 2)[0] == 0.75
    with pytest.raises(ValueError):
        match_labels([0], [0, 1], 2)
    with pytest.raises(ValueError):
        match_labels([0], [0], 9)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=30), st.data())
def test_match_labels_permutation_invariant(truth, data):
    L = 4
    n = len(truth)
    pred = np.array(data.draw(st.lists(st.integers(0, L - 1), min_size=n, max_size=n)))
    sigma = np.array(data.draw(st.permutations(range(L))))
    a = match_labels(pred, truth, L)[0]
    assert match_labels(sigma[pred], truth, L)[0] == a
    assert match_labels(pred, sigma[np.array(truth)], L)[0] == a
