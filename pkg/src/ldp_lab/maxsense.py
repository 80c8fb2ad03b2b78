"""MaxSense and Multi-MaxSense: one disjunction bit per sensing vector,
per-item counts, and exact 1-D clustering of the counts.

Two simulation engines produce the same joint law of the counts:

``dense``     draws the full ``U x N`` sensing matrix, literally as specified.
``marginal``  draws sensing bits only on each user's rated items. Sensing bits
              on unrated items never affect the sketch, so for each item the
              outside contribution is Binomial(M_i, p) with M_i the number of
              users with a released 1 who did not rate item i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelKernel, user_data_space
from .clustering import kmeans_1d_exact
from .model import GroundTruth, ModelParams, UserRecord, class_sizes, iter_population
from .privacy import dp_bit_release, hat_epsilon, keep_probability, split_budget
from .rng import substream

ENGINES = ("dense", "marginal")
SEPARABILITY_TOL = 1e-9


# -- per-user operations ------------------------------------------------------

def _sensing_p(theta: float, w: int) -> float:
    p = theta / w
    if not 0 < p <= 1:
        raise ValueError(f"sensing probability theta/w = {p} must lie in (0, 1]")
    return p


def make_sensing_vector(N: int, theta: float, w: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Bernoulli(theta/w) mask over the N items."""
    p = _sensing_p(theta, w)
    return rng.random(N) < p


def ms_private_sketch(user: UserRecord, H) -> int:
    """1 iff some sensed item is rated by the user with rating 1."""
    H = np.asarray(H, dtype=bool)
    return int(bool(np.any(H[user.items] & user.ratings.astype(bool))))


@dataclass
class ItemCounts:
    counts: np.ndarray
    n_sketches: int = 0

    def merge(self, other: "ItemCounts") -> "ItemCounts":
        return ItemCounts(self.counts + other.counts, self.n_sketches + other.n_sketches)


def item_counts(sketches, N: int) -> ItemCounts:
    """B_i = sum of H_i * S over ``(H, S)`` pairs."""
    B = np.zeros(N, dtype=np.int64)
    n = 0
    for H, s in sketches:
        H = np.asarray(H, dtype=bool)
        if H.size != N:
            raise ValueError(f"sensing vector of length {H.size}, expected {N}")
        if s:
            B += H
        n += 1
    return ItemCounts(B, n)


def ms_cluster(counts, L: int) -> np.ndarray:
    """Optimal 1-D k-means on the item counts with k=L."""
    if L < 2:
        raise ValueError("L must be >= 2")
    c = counts.counts if isinstance(counts, ItemCounts) else counts
    return kmeans_1d_exact(np.asarray(c, dtype=float), L).labels


# -- closed forms -------------------------------------------------------------

def class_load(p: ModelParams) -> np.ndarray:
    """v_k = sum_l beta_l b_kl, the mean rating rate of user class k."""
    return p.b @ p.beta


def delta_min(p: ModelParams, theta: float | None = None) -> float:
    theta = p.theta if theta is None else theta
    wts = p.alpha * np.exp(-theta * class_load(p))
    gaps = [abs(float(np.dot(wts, p.b[:, l] - p.b[:, m])))
            for l in range(p.L) for m in range(l + 1, p.L)]
    return min(gaps)


@dataclass
class Separability:
    passed: bool
    failing: list = field(default_factory=list)   # 1-indexed (l, l') pairs

    def __bool__(self):
        return self.passed


def check_separability(p: ModelParams) -> Separability:
    """For every class pair some group of equal-load user classes must separate it."""
    v = class_load(p)
    groups = []
    for k in range(p.K):
        for g in groups:
            if abs(v[g[0]] - v[k]) <= SEPARABILITY_TOL:
                g.append(k)
                break
        else:
            groups.append([k])
    failing = []
    for l in range(p.L):
        for m in range(l + 1, p.L):
            ok = any(abs(float(np.dot(p.alpha[g], p.b[g, l] - p.b[g, m]))) > SEPARABILITY_TOL for g in groups)
            if not ok:
                failing.append((l + 1, m + 1))
    return Separability(not failing, failing)


def q_zero(p: ModelParams, sizes=None) -> np.ndarray:
    """Per user class, the product over items of (1 - theta b_kC(j) / N)."""
    sizes = class_sizes(p.beta, p.N) if sizes is None else np.asarray(sizes)
    return np.prod((1.0 - p.theta * p.b / p.N) ** sizes[None, :], axis=1)


def expected_count(p: ModelParams, ell: int, U: int | None = None) -> float:
    """E[B_i] for an item of class ``ell`` (0-indexed).

    Treats every item as rated independently with probability w/N. The
    class-mixture weight of q_k^0 is alpha_k.
    """
    U = p.U if U is None else U
    e = hat_epsilon(p.epsilon)
    sp = _sensing_p(p.theta, p.w)
    q = q_zero(p)
    bl = p.b[:, ell]
    base = 0.5 + e / 4 - e / 2 * float(np.dot(p.alpha, q))
    tilt = (p.w - p.theta) / p.N * e / 2 * float(np.dot(p.alpha, q * bl / (1 - p.theta * bl / p.N)))
    return U * sp * (base + tilt)


def _subset_product_mean(factors_by_class, sizes, specials, w):
    """E[prod f_j over a uniform w-subset of the items].

    ``specials`` lists ``(class, factor)`` for distinguished items; they are
    taken out of their class, the remaining items use ``factors_by_class``.
    """
    seq = [f for _, f in specials]
    rest = np.array(sizes, dtype=np.int64)
    for c, _ in specials:
        rest[c] -= 1
    for l, n in enumerate(rest):
        seq.extend([factors_by_class[l]] * int(n))
    N = len(seq)
    dp = np.zeros(w + 1)
    dp[0] = 1.0
    for t, f in enumerate(seq):
        m = np.arange(w + 1)
        take = np.where(m < w, (w - m) / (N - t), 0.0)
        new = dp * (1 - take)
        new[1:] += dp[:-1] * take[:-1] * f
        dp = new
    return dp[w]


def _sensed_one_rate(p: ModelParams, classes) -> float:
    """P[S = 1 | the items of the given classes are all sensed], fixed-w sampling."""
    e = hat_epsilon(p.epsilon)
    sp = _sensing_p(p.theta, p.w)
    sizes = class_sizes(p.beta, p.N)
    zero = 0.0
    for k in range(p.K):
        specials = [(c, 1 - p.b[k, c]) for c in classes]
        zero += p.alpha[k] * _subset_product_mean(1 - sp * p.b[k], sizes, specials, p.w)
    return 0.5 + e / 4 - e / 2 * zero


def exact_expected_count(p: ModelParams, ell: int, U: int | None = None) -> float:
    """E[B_i] for an item of class ``ell`` when each user rates exactly w items.

    Sums over the hypergeometric composition of the rated set instead of
    independent inclusion. Agrees with :func:`expected_count` to O(w/N).
    """
    U = p.U if U is None else U
    return U * _sensing_p(p.theta, p.w) * _sensed_one_rate(p, [ell])


def count_variance(p: ModelParams, ell: int, U: int | None = None) -> float:
    """Var[B_i]: B_i is a sum of U i.i.d. indicators H_ui S_u."""
    U = p.U if U is None else U
    m = exact_expected_count(p, ell, 1)
    return U * m * (1 - m)


def count_covariance(p: ModelParams, ell: int, ell2: int, U: int | None = None) -> float:
    """Cov[B_i, B_j] for distinct items of classes ``ell`` and ``ell2``.

    Positive: both counts grow with the same released bits.
    """
    U = p.U if U is None else U
    sp = _sensing_p(p.theta, p.w)
    both = sp * sp * _sensed_one_rate(p, [ell, ell2])
    return U * (both - exact_expected_count(p, ell, 1) * exact_expected_count(p, ell2, 1))


def class_mean_sd(p: ModelParams, ell: int, U: int | None = None) -> float:
    """Standard deviation of the average of B_i over the items of class ``ell``."""
    n = int(class_sizes(p.beta, p.N)[ell])
    var = count_variance(p, ell, U)
    cov = count_covariance(p, ell, ell, U) if n > 1 else 0.0
    return math.sqrt((var + (n - 1) * cov) / n)


def theta_sweep(p: ModelParams, thetas) -> tuple[list, float]:
    """delta_min over candidate thetas, and the maximizing theta."""
    rows = [(float(t), delta_min(p, t)) for t in thetas if 0 < t <= p.w]
    if not rows:
        raise ValueError("no admissible theta in (0, w]")
    best = max(rows, key=lambda r: (r[1], -r[0]))
    return rows, best[0]


def recommended_users(p: ModelParams, C: float) -> int:
    """C * N^2 log2 N / (hat_eps^2 delta_min^2 w), rounded up."""
    e = hat_epsilon(p.epsilon)
    d = delta_min(p)
    if d <= 0:
        raise ValueError("delta_min is zero: the classes are not separable")
    return int(math.ceil(C * p.N ** 2 * math.log2(p.N) / (e * e * d * d * p.w)))


# -- Multi-MaxSense -------------------------------------------------------------

def mms_questions(epsilon: float) -> int:
    return max(1, math.ceil(epsilon))


def mms_block_size(N: int, theta: float, w: int) -> int:
    return math.ceil(N * theta / w)


def _mms_layout(N, theta, w, Q):
    if Q < 1:
        raise ValueError("Q must be >= 1")
    s = mms_block_size(N, theta, w)
    if Q * s > N:
        raise ValueError(f"{Q} blocks of size {s} do not fit in {N} items")
    return s, N // s


def multi_maxsense(user: UserRecord, Q: int, N: int, theta: float, w: int, epsilon: float,
                   rng: np.random.Generator) -> list:
    """Q disjoint block sensing vectors and their bits, each released at epsilon/Q.

    Blocks come from a fresh uniform partition of the items into
    ``N // s`` blocks of size ``s = ceil(N theta / w)``; any leftover items
    form a short block that is never used.
    """
    s, n_blocks = _mms_layout(N, theta, w, Q)
    eps_q = split_budget(epsilon, Q)
    perm = rng.permutation(N)
    chosen = rng.choice(n_blocks, size=Q, replace=False)
    out = []
    for c in chosen:
        H = np.zeros(N, dtype=bool)
        H[perm[c * s:(c + 1) * s]] = True
        out.append((H, dp_bit_release(ms_private_sketch(user, H), eps_q, rng)))
    return out


# -- bulk simulation ------------------------------------------------------------

def _positive_mask(pop, N):
    n = len(pop)
    pos = np.zeros((n, N), dtype=bool)
    pos[np.arange(n)[:, None], pop.items] = pop.ratings
    return pos


def simulate_maxsense(p: ModelParams, truth: GroundTruth, seed: int, engine: str = "marginal",
                      sink=None) -> ItemCounts:
    """Counts B for all ``p.U`` users.

    ``sink(user_ids, bits, H)`` receives each block's sketches; it needs the
    full sensing matrix and so requires the dense engine.
    """
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    if sink is not None and engine != "dense":
        raise ValueError("sketch dumps need the dense engine")
    N = p.N
    sp = _sensing_p(p.theta, p.w)
    B = np.zeros(N, dtype=np.int64)
    outside = np.zeros(N, dtype=np.int64)
    for b, start, pop in iter_population(p, truth, seed):
        rng = substream(seed, "maxsense", b)
        n = len(pop)
        if engine == "dense":
            H = rng.random((n, N)) < sp
            s0 = (H & _positive_mask(pop, N)).any(axis=1)
            bits = dp_bit_release(s0, p.epsilon, rng).astype(bool)
            B += H[bits].sum(axis=0)
            if sink is not None:
                sink(start + np.arange(n), bits.astype(np.int8), H)
        else:
            Hr = rng.random(pop.items.shape) < sp
            s0 = (Hr & pop.ratings).any(axis=1)
            bits = dp_bit_release(s0, p.epsilon, rng).astype(bool)
            np.add.at(B, pop.items[bits][Hr[bits]], 1)
            rated_by_one = np.bincount(pop.items[bits].ravel(), minlength=N)
            outside += int(bits.sum()) - rated_by_one
    if engine == "marginal":
        B += substream(seed, "maxsense-out").binomial(outside, sp)
    return ItemCounts(B, p.U)


def simulate_mms(p: ModelParams, truth: GroundTruth, seed: int, Q: int | None = None) -> ItemCounts:
    """Multi-MaxSense counts for all users; Q defaults to max(1, ceil(epsilon))."""
    Q = mms_questions(p.epsilon) if Q is None else Q
    N = p.N
    s, n_blocks = _mms_layout(N, p.theta, p.w, Q)
    eps_q = split_budget(p.epsilon, Q)
    B = np.zeros(N, dtype=np.int64)
    for b, _, pop in iter_population(p, truth, seed):
        rng = substream(seed, "mms", b)
        n = len(pop)
        rows = np.arange(n)[:, None]
        perm = np.argsort(rng.random((n, N)), axis=1)
        chosen = np.argsort(rng.random((n, n_blocks)), axis=1)[:, :Q]
        pos = _positive_mask(pop, N)
        for q in range(Q):
            cols = chosen[:, q:q + 1] * s + np.arange(s)[None, :]
            sensed = np.take_along_axis(perm, cols, axis=1)
            s0 = pos[rows, sensed].any(axis=1)
            bits = dp_bit_release(s0, eps_q, rng).astype(bool)
            B += np.bincount(sensed[bits].ravel(), minlength=N)
    return ItemCounts(B, p.U * Q)


# -- exact release kernels ------------------------------------------------------

def maxsense_user_kernel(N: int, w: int, H, epsilon: float, items=None) -> ChannelKernel:
    """Release kernel for a fixed public sensing vector.

    Inputs are all user data, or only rating vectors on ``items`` if given.
    """
    H = np.asarray(H, dtype=bool)
    inputs = user_data_space(N, w)
    if items is not None:
        items = tuple(sorted(items))
        inputs = [x for x in inputs if x[0] == items]
    k = keep_probability(epsilon)
    m = np.empty((len(inputs), 2))
    for r, (I, z) in enumerate(inputs):
        s0 = int(any(H[i] and zi for i, zi in zip(I, z)))
        m[r] = (k, 1 - k) if s0 == 0 else (1 - k, k)
    return ChannelKernel(inputs, [0, 1], m)


def mms_user_kernel(N: int, w: int, blocks, epsilon: float) -> ChannelKernel:
    """Joint kernel of the Q released bits for fixed disjoint sensing blocks."""
    Q = len(blocks)
    eps_q = epsilon / Q
    k = keep_probability(eps_q)
    inputs = user_data_space(N, w)
    outputs = [tuple(int(c) for c in np.binary_repr(v, Q)) for v in range(2 ** Q)]
    m = np.empty((len(inputs), len(outputs)))
    for r, (I, z) in enumerate(inputs):
        pos = {i for i, zi in zip(I, z) if zi}
        s0 = [int(any(i in pos for i in blk)) for blk in blocks]
        for c, y in enumerate(outputs):
            m[r, c] = math.prod(k if yq == sq else 1 - k for yq, sq in zip(y, s0))
    return ChannelKernel(inputs, outputs, m)


# -- dumps ----------------------------------------------------------------------

def hex_mask(H) -> str:
    """Bit i of the integer is item i (0-indexed), printed as hex."""
    H = np.asarray(H, dtype=bool)
    return format(int(sum(1 << int(i) for i in np.flatnonzero(H))), "x")


def sketch_writer(fh):
    """A ``sink`` for :func:`simulate_maxsense` writing ``user_id,S,<hex H>``."""
    def sink(uids, bits, H):
        for u, s, h in zip(uids, bits, H):
            fh.write(f"{int(u) + 1},{int(s)},{hex_mask(h)}\n")
    return sink


def write_counts_csv(path, counts, header_lines=()):
    c = counts.counts if isinstance(counts, ItemCounts) else counts
    lines = [f"# {h}" for h in header_lines] + ["item,B_i"]
    lines += [f"{i + 1},{int(v)}" for i, v in enumerate(c)]
    Path(path).write_text("\n".join(lines) + "\n")
