"""Bipartite stochastic blockmodel for users, items and binary ratings.

Items and users are 0-indexed in memory. External files (datasets, CSV
dumps) are 1-indexed for both items and class labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import BLOCK_SIZE, blocks, substream


@dataclass
class ModelParams:
    N: int
    U: int
    K: int
    L: int
    alpha: np.ndarray
    beta: np.ndarray
    b: np.ndarray
    w: int
    epsilon: float = 1.0
    theta: float = 1.0

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)
        self.b = np.asarray(self.b, dtype=float).reshape(self.K, self.L)

    def replace(self, **changes) -> "ModelParams":
        d = self.to_dict()
        d.update(changes)
        return ModelParams.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "N": int(self.N), "U": int(self.U), "K": int(self.K), "L": int(self.L),
            "alpha": [float(a) for a in self.alpha],
            "beta": [float(x) for x in self.beta],
            "b": [[float(x) for x in row] for row in self.b],
            "w": int(self.w), "epsilon": float(self.epsilon), "theta": float(self.theta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(**d)


def two_class_params(N, U, w, b=(0.9, 0.1), epsilon=1.0, theta=1.0) -> ModelParams:
    """Single user class, two equal item classes with affinities ``b``."""
    return ModelParams(N=N, U=U, K=1, L=2, alpha=[1.0], beta=[0.5, 0.5],
                       b=[list(b)], w=w, epsilon=epsilon, theta=theta)


def class_sizes(weights: np.ndarray, n: int) -> np.ndarray:
    """Round ``weights * n`` half-up; the residue goes to the largest class.

    Ties for the largest weight go to the highest class index.
    """
    sizes = np.floor(np.asarray(weights) * n + 0.5).astype(np.int64)
    largest = len(weights) - 1 - int(np.argmax(np.asarray(weights)[::-1]))
    sizes[largest] += n - sizes.sum()
    return sizes


def validate_params(p: ModelParams) -> None:
    """Raise ``ValueError`` naming the first violated invariant."""
    if p.N < 1:
        raise ValueError(f"N must be >= 1, got {p.N}")
    if p.U < 0:
        raise ValueError(f"U must be >= 0, got {p.U}")
    if p.alpha.shape != (p.K,):
        raise ValueError(f"alpha has length {p.alpha.size}, expected K={p.K}")
    if p.beta.shape != (p.L,):
        raise ValueError(f"beta has length {p.beta.size}, expected L={p.L}")
    if abs(p.alpha.sum() - 1.0) > 1e-12 or np.any(p.alpha < 0):
        raise ValueError(f"alpha sums to {p.alpha.sum():.12g}")
    if abs(p.beta.sum() - 1.0) > 1e-12 or np.any(p.beta < 0):
        raise ValueError(f"beta sums to {p.beta.sum():.12g}")
    if np.any(p.b < 0) or np.any(p.b > 1):
        raise ValueError("b entries must lie in [0, 1]")
    if p.w < 1:
        raise ValueError(f"w must be >= 1, got {p.w}")
    if p.w > p.N:
        raise ValueError(f"w exceeds N ({p.w} > {p.N})")
    if not p.epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {p.epsilon}")
    if not p.theta > 0:
        raise ValueError(f"theta must be > 0, got {p.theta}")
    rounded = np.floor(p.beta * p.N + 0.5)
    if np.any(rounded < 1):
        ell = int(np.argmin(rounded))
        raise ValueError(f"item class {ell + 1} is empty: round(beta*N) = {int(rounded[ell])}")


@dataclass(frozen=True)
class GroundTruth:
    item_class: np.ndarray
    user_class: np.ndarray

    def __post_init__(self):
        self.item_class.setflags(write=False)
        self.user_class.setflags(write=False)


def _assign(sizes, rng) -> np.ndarray:
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return labels[rng.permutation(labels.size)]


def sample_ground_truth(p: ModelParams, seed: int) -> GroundTruth:
    validate_params(p)
    rng = substream(seed, "truth")
    items = _assign(class_sizes(p.beta, p.N), rng)
    users = _assign(class_sizes(p.alpha, p.U), rng)
    return GroundTruth(item_class=items, user_class=users)


@dataclass
class UserRecord:
    user_id: int
    items: np.ndarray
    ratings: np.ndarray = field(repr=False)

    @property
    def w(self) -> int:
        return self.items.size


def sample_subsets(rng: np.random.Generator, n_rows: int, N: int, w: int) -> np.ndarray:
    """Uniform size-``w`` subsets of ``range(N)``, one sorted row each."""
    if w * 4 >= N:
        keys = rng.random((n_rows, N))
        idx = np.argpartition(keys, w - 1, axis=1)[:, :w] if w < N else np.tile(np.arange(N), (n_rows, 1))
        return np.sort(idx, axis=1)
    out = np.sort(rng.integers(0, N, size=(n_rows, w)), axis=1)
    bad = np.flatnonzero((np.diff(out, axis=1) == 0).any(axis=1))
    while bad.size:
        redo = np.sort(rng.integers(0, N, size=(bad.size, w)), axis=1)
        out[bad] = redo
        bad = bad[(np.diff(redo, axis=1) == 0).any(axis=1)]
    return out


@dataclass
class Population:
    """All users of one dataset as dense ``U x w`` arrays."""
    items: np.ndarray
    ratings: np.ndarray
    user_class: np.ndarray

    def __len__(self):
        return self.items.shape[0]

    def record(self, u: int) -> UserRecord:
        return UserRecord(u, self.items[u].copy(), self.ratings[u].copy())


def _sample_block(p: ModelParams, truth: GroundTruth, seed: int, block: int, start: int, stop: int):
    rng = substream(seed, "users", block)
    items = sample_subsets(rng, stop - start, p.N, p.w)
    k = truth.user_class[start:stop]
    prob = p.b[k[:, None], truth.item_class[items]]
    ratings = rng.random(items.shape) < prob
    return items, ratings


def sample_population(p: ModelParams, truth: GroundTruth, seed: int, start: int = 0, stop: int | None = None) -> Population:
    """Generate users ``[start, stop)`` (default: all ``U``).

    Users are drawn in fixed blocks of ``BLOCK_SIZE`` with one substream per
    block, so any slice is reproducible on its own.
    """
    stop = p.U if stop is None else stop
    first, last = start // BLOCK_SIZE, (stop - 1) // BLOCK_SIZE if stop > start else -1
    items, ratings = [], []
    for b in range(first, last + 1):
        lo, hi = b * BLOCK_SIZE, min((b + 1) * BLOCK_SIZE, p.U)
        it, rt = _sample_block(p, truth, seed, b, lo, hi)
        sl = slice(max(start, lo) - lo, min(stop, hi) - lo)
        items.append(it[sl])
        ratings.append(rt[sl])
    if not items:
        return Population(np.zeros((0, p.w), np.int64), np.zeros((0, p.w), bool), truth.user_class[:0])
    return Population(np.concatenate(items), np.concatenate(ratings), truth.user_class[start:stop])


def iter_population(p: ModelParams, truth: GroundTruth, seed: int):
    """Yield ``(block, start, Population)`` block by block."""
    for b, lo, hi in blocks(p.U):
        it, rt = _sample_block(p, truth, seed, b, lo, hi)
        yield b, lo, Population(it, rt, truth.user_class[lo:hi])


def sample_user(p: ModelParams, truth: GroundTruth, user_id: int, seed: int) -> UserRecord:
    """One user's private data, identical to row ``user_id`` of the population."""
    if not 0 <= user_id < p.U:
        raise ValueError(f"user_id {user_id} outside [0, {p.U})")
    pop = sample_population(p, truth, seed, user_id, user_id + 1)
    return UserRecord(user_id, pop.items[0].copy(), pop.ratings[0].copy())


def deterministic_truth_vector(N: int, seed: int) -> np.ndarray:
    """Uniform i.i.d. bits: the two-class, deterministic-rating truth."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return substream(seed, "truth-bits").integers(0, 2, size=N).astype(np.int8)


# -- dataset file -------------------------------------------------------------

def write_dataset(path, p: ModelParams, truth: GroundTruth, pop: Population, seed: int, extra: dict | None = None):
    path = Path(path)
    head = f"#ldp-dataset v1 N={p.N} U={len(pop)} K={p.K} L={p.L} w={p.w} seed={seed}"
    for k, v in (extra or {}).items():
        head += f" {k}={v}"
    lines = [head, "items " + " ".join(str(c + 1) for c in truth.item_class)]
    for u in range(len(pop)):
        pairs = ",".join(f"{i + 1}:{int(r)}" for i, r in zip(pop.items[u], pop.ratings[u]))
        lines.append(f"{u + 1} {int(pop.user_class[u]) + 1} {pairs}")
    path.write_text("\n".join(lines) + "\n")


def read_dataset(path):
    """Return ``(header, truth, population)`` from a dataset file."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#ldp-dataset v1"):
        raise ValueError("missing '#ldp-dataset v1' header")
    header = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    for key in ("N", "U", "K", "L", "w", "seed"):
        if key not in header:
            raise ValueError(f"header lacks {key}")
        header[key] = int(header[key])
    if not lines[1].startswith("items "):
        raise ValueError("second line must start with 'items'")
    item_class = np.array([int(t) - 1 for t in lines[1].split()[1:]], dtype=np.int64)
    if item_class.size != header["N"]:
        raise ValueError("item label count does not match N")
    U, w = header["U"], header["w"]
    items = np.zeros((U, w), np.int64)
    ratings = np.zeros((U, w), bool)
    user_class = np.zeros(U, np.int64)
    body = lines[2:]
    if len(body) != U:
        raise ValueError(f"expected {U} user lines, found {len(body)}")
    for line in body:
        uid, k, pairs = line.split()
        u = int(uid) - 1
        user_class[u] = int(k) - 1
        for j, tok in enumerate(pairs.split(",")):
            i, r = tok.split(":")
            items[u, j] = int(i) - 1
            ratings[u, j] = r == "1"
    truth = GroundTruth(item_class=item_class, user_class=user_class)
    return header, truth, Population(items, ratings, user_class)
