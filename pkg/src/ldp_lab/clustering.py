"""k-means (Lloyd and exact 1-D), spectral embedding and label matching."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .rng import substream

MAX_ITER = 200
MAX_MATCH_L = 8


@dataclass
class ClusteringResult:
    labels: np.ndarray      # 0-indexed
    inertia: float
    restarts_used: int = 1
    centers: np.ndarray | None = None


def _inertia(points, labels, centers):
    return float(((points - centers[labels]) ** 2).sum())


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(points, centers):
    k = centers.shape[0]
    labels = None
    prev = np.inf
    for _ in range(MAX_ITER):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
            else:
                # respawn at the point farthest from its own centre
                far = int(((points - centers[labels]) ** 2).sum(axis=1).argmax())
                centers[c] = points[far]
                labels[far] = c
        cur = _inertia(points, labels, centers)
        assert cur <= prev * (1 + 1e-12) + 1e-9, "k-means inertia increased"
        prev = cur
    return labels, centers


def kmeans(points, k: int, restarts: int = 10, seed: int = 0) -> ClusteringResult:
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` runs.

    Restart ``r`` seeds from substream ``kmeans:r``; ties in inertia go to the
    lower restart index.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] == 0:
        raise ValueError("kmeans on empty input")
    if not 1 <= k <= points.shape[0]:
        raise ValueError(f"k={k} must lie in [1, {points.shape[0]}]")
    best = None
    for r in range(max(1, restarts)):
        centers = _kmeanspp(points, k, substream(seed, "kmeans", r))
        labels, centers = _lloyd(points, centers)
        inertia = _inertia(points, labels, centers)
        if best is None or inertia < best.inertia:
            best = ClusteringResult(labels, inertia, r + 1, centers)
    best.restarts_used = max(1, restarts)
    return best


def kmeans_1d_exact(points, k: int) -> ClusteringResult:
    """Globally optimal 1-D k-means by dynamic programming over sorted points.

    Optimal 1-D clusters are contiguous in sorted order. Empty clusters are
    allowed and preferred on ties, so identical points form one cluster.
    Labels are ordered by cluster position (label 0 holds the smallest values).
    """
    x = np.asarray(points, dtype=float).reshape(-1)
    n = x.size
    if not 1 <= k <= max(n, 1):
        raise ValueError(f"k={k} must lie in [1, {n}]")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    s1 = np.concatenate([[0.0], np.cumsum(xs)])
    s2 = np.concatenate([[0.0], np.cumsum(xs * xs)])

    def cost(j, i):   # SSE of xs[j:i], vectorised over j
        cnt = i - j
        with np.errstate(invalid="ignore", divide="ignore"):
            c = (s2[i] - s2[j]) - (s1[i] - s1[j]) ** 2 / cnt
        return np.where(cnt > 0, np.maximum(c, 0.0), 0.0)

    # D[m, i]: best SSE of xs[:i] with at most m+1 clusters
    D = np.empty((k, n + 1))
    D[0] = cost(np.zeros(n + 1, dtype=int), np.arange(n + 1))
    arg = np.zeros((k, n + 1), dtype=int)
    for m in range(1, k):
        D[m, 0] = 0.0
        for i in range(1, n + 1):
            js = np.arange(i)
            cand = D[m - 1, js] + cost(js, i)
            j = int(cand.argmin())
            if cand[j] < D[m - 1, i] - 1e-12 * max(1.0, abs(D[m - 1, i])):
                D[m, i], arg[m, i] = cand[j], j
            else:
                D[m, i], arg[m, i] = D[m - 1, i], -1
    labels_sorted = np.zeros(n, dtype=int)
    bounds = []
    i, m = n, k - 1
    while m >= 0 and i > 0:
        if m == 0:
            bounds.append((0, i))
            break
        j = arg[m, i]
        if j < 0:
            m -= 1
            continue
        bounds.append((j, i))
        i, m = j, m - 1
    for lab, (j, i) in enumerate(reversed(bounds)):
        labels_sorted[j:i] = lab
    labels = np.empty(n, dtype=int)
    labels[order] = labels_sorted
    return ClusteringResult(labels, float(D[k - 1, n]))


def spectral_embedding(matrix, dim: int) -> np.ndarray:
    """Rows of the ``dim`` eigenvectors with largest |eigenvalue|.

    Ties in |eigenvalue| are broken by larger signed value, then by lower
    index. Each eigenvector has unit Euclidean norm and its largest-magnitude
    entry made positive so the embedding is deterministic.
    """
    a = np.asarray(matrix, dtype=float)
    a = (a + a.T) / 2
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed to converge on {a.shape[0]}x{a.shape[0]} matrix") from exc
    idx = np.arange(vals.size)
    order = np.lexsort((idx, -vals, -np.abs(vals)))[:dim]
    vecs = vecs[:, order]
    for c in range(vecs.shape[1]):
        j = int(np.abs(vecs[:, c]).argmax())
        if vecs[j, c] < 0:
            vecs[:, c] *= -1
    return vecs


def match_labels(predicted, truth, L: int):
    """Best agreement over all relabelings of ``predicted``.

    Returns ``(accuracy, perm)`` where ``perm[c]`` is the truth label assigned
    to predicted label ``c``.
    """
    if L > MAX_MATCH_L:
        raise ValueError(f"match_labels enumerates L! permutations; L={L} exceeds {MAX_MATCH_L}")
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("label arrays differ in length")
    n = truth.size
    conf = np.zeros((L, L), dtype=np.int64)
    np.add.at(conf, (predicted, truth), 1)
    best, best_perm = -1, None
    rows = np.arange(L)
    for perm in itertools.permutations(range(L)):
        agree = int(conf[rows, perm].sum())
        if agree > best:
            best, best_perm = agree, perm
    return (best / n if n else 1.0), best_perm
