"""Pairwise-Preference: one privatized pair-agreement bit per user, counted
into an item-item matrix and clustered spectrally."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ChannelKernel, user_data_space
from .clustering import kmeans, spectral_embedding
from .model import GroundTruth, ModelParams, UserRecord, iter_population
from .privacy import dp_bit_release, hat_epsilon, keep_probability
from .rng import substream

MODES = ("random-global", "random-rated")


@dataclass(frozen=True)
class PairSketch:
    user_id: int
    pair: tuple
    bit: int

    def __post_init__(self):
        if self.pair[0] == self.pair[1]:
            raise ValueError(f"pair {self.pair} repeats an item")


def assign_pair(user: UserRecord, mode: str, rng: np.random.Generator, N: int | None = None) -> tuple:
    """Public query pair for one user, as a sorted tuple of 0-indexed items."""
    if mode == "random-global":
        if N is None or N < 2:
            raise ValueError("random-global mode needs N >= 2")
        i, j = rng.choice(N, size=2, replace=False)
    elif mode == "random-rated":
        if user.w < 2:
            raise ValueError(f"random-rated mode needs w >= 2, user has w={user.w}")
        a, c = rng.choice(user.w, size=2, replace=False)
        i, j = user.items[a], user.items[c]
    else:
        raise ValueError(f"unknown pair mode {mode!r}")
    return (int(min(i, j)), int(max(i, j)))


def pp_private_sketch(user: UserRecord, pair) -> int:
    """1 iff both items of ``pair`` are rated and both ratings are 1."""
    rated = dict(zip(user.items.tolist(), user.ratings.tolist()))
    return int(bool(rated.get(pair[0], 0)) and bool(rated.get(pair[1], 0)))


def pp_release(user: UserRecord, mode: str, epsilon: float, rng, N: int) -> PairSketch:
    pair = assign_pair(user, mode, rng, N)
    return PairSketch(user.user_id, pair, dp_bit_release(pp_private_sketch(user, pair), epsilon, rng))


def accumulate_matrix(sketches, N: int) -> np.ndarray:
    """Symmetric integer matrix counting released 1-bits per queried pair."""
    A = np.zeros((N, N), dtype=np.int64)
    for s in sketches:
        i, j = s.pair
        if not (0 <= i < N and 0 <= j < N):
            raise ValueError(f"pair {s.pair} outside [0, {N})")
        if s.bit:
            A[i, j] += 1
            A[j, i] += 1
    return A


def pp_cluster(matrix, L: int, restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Top-L spectral embedding of the matrix, then k-means with k=L."""
    A = np.asarray(matrix, dtype=float)
    if L < 2 or A.shape[0] < L:
        raise ValueError(f"need L >= 2 and N >= L, got L={L}, N={A.shape[0]}")
    emb = spectral_embedding(A, L)
    return kmeans(emb, L, restarts=restarts, seed=seed).labels


def _global_pairs(rng, n, N):
    i = rng.integers(0, N, size=n)
    j = rng.integers(0, N - 1, size=n)
    j = j + (j >= i)
    return np.minimum(i, j), np.maximum(i, j)


def simulate_pairwise(p: ModelParams, truth: GroundTruth, seed: int, mode: str = "random-global",
                      sink=None) -> np.ndarray:
    """Run the whole user side for all ``p.U`` users and return the matrix.

    Draws use substream ``pairwise:block`` so the result is the same however
    the blocks are scheduled. ``sink(user_ids, i, j, bits)`` receives each
    block's sketches when given.
    """
    if mode not in MODES:
        raise ValueError(f"unknown pair mode {mode!r}")
    if mode == "random-rated" and p.w < 2:
        raise ValueError(f"random-rated mode needs w >= 2, got w={p.w}")
    N = p.N
    A = np.zeros((N, N), dtype=np.int64)
    for b, start, pop in iter_population(p, truth, seed):
        rng = substream(seed, "pairwise", b)
        n = len(pop)
        rows = np.arange(n)
        if mode == "random-global":
            i, j = _global_pairs(rng, n, N)
        else:
            a, c = _global_pairs(rng, n, p.w)
            i, j = pop.items[rows, a], pop.items[rows, c]   # items are sorted, so i < j
        pos = np.zeros((n, N), dtype=bool)
        pos[rows[:, None], pop.items] = pop.ratings
        s0 = pos[rows, i] & pos[rows, j]
        bits = dp_bit_release(s0, p.epsilon, rng).astype(bool)
        np.add.at(A, (i[bits], j[bits]), 1)
        if sink is not None:
            sink(start + rows, i, j, bits.astype(np.int8))
    return A + A.T


def pair_one_probability(p: ModelParams, ell: int, ell2: int) -> float:
    """P[a given user is queried on a fixed pair {i, j} and releases 1].

    Items i, j are in classes ``ell`` and ``ell2``; random-global mode.
    """
    both = p.w * (p.w - 1) / (p.N * (p.N - 1))
    s0 = both * float(np.dot(p.alpha, p.b[:, ell] * p.b[:, ell2]))
    k = keep_probability(p.epsilon)
    released = (1 - k) + (2 * k - 1) * s0
    return 2.0 / (p.N * (p.N - 1)) * released


def expected_matrix(p: ModelParams, truth: GroundTruth) -> np.ndarray:
    """E[A] in random-global mode, zero diagonal."""
    c = truth.item_class
    L = p.L
    table = np.array([[pair_one_probability(p, a, b) for b in range(L)] for a in range(L)])
    E = p.U * table[c[:, None], c[None, :]]
    np.fill_diagonal(E, 0.0)
    return E


def signal_gap(p: ModelParams) -> float:
    """hat-epsilon scaled spread of the per-class-pair agreement rates."""
    g = np.array([[np.dot(p.alpha, p.b[:, a] * p.b[:, b]) for b in range(p.L)] for a in range(p.L)])
    return hat_epsilon(p.epsilon) / 2 * float(g.max() - g.min())


def pairwise_user_kernel(N: int, w: int, pair, epsilon: float) -> ChannelKernel:
    """Release kernel of one user for a fixed public pair, over all user data."""
    inputs = user_data_space(N, w)
    k = keep_probability(epsilon)
    m = np.empty((len(inputs), 2))
    for r, (I, z) in enumerate(inputs):
        rated = dict(zip(I, z))
        s0 = int(bool(rated.get(pair[0], 0)) and bool(rated.get(pair[1], 0)))
        m[r] = (k, 1 - k) if s0 == 0 else (1 - k, k)
    return ChannelKernel(inputs, [0, 1], m)


def write_matrix_csv(path, A, header_lines=()):
    """Upper triangle as ``i,j,count`` (1-indexed, nonzero entries only)."""
    A = np.asarray(A)
    iu, ju = np.nonzero(np.triu(A, 1))
    lines = [f"# {h}" for h in header_lines] + ["i,j,count"]
    lines += [f"{i + 1},{j + 1},{int(A[i, j])}" for i, j in zip(iu, ju)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path, N: int) -> np.ndarray:
    A = np.zeros((N, N), dtype=np.int64)
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#") or line.startswith("i,"):
            continue
        i, j, c = (int(t) for t in line.split(","))
        A[i - 1, j - 1] = A[j - 1, i - 1] = c
    return A
