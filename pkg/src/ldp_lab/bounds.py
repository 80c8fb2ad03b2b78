"""Exact information oracles on tiny instances and closed-form bound calculators.

The hidden truth is a bit vector Z over N items with a prior on {0,1}^N
(uniform unless given). A user holds a uniform size-w subset I together with
Z restricted to I, and releases a sketch through a :class:`ChannelKernel` over
``user_data_space(N, w)``. Mutual information is in bits. epsilon is a
natural-log exponent; ``basic_dp_bound`` does the conversion.

Enumeration is capped at N <= 12 and w <= 3 (``MAX_N``, ``MAX_W``) and the
one-bit search at N <= 5. Exceeding a cap raises; nothing is approximated.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .channel import ChannelKernel, user_data_space
from .privacy import verify_dp_kernel
from .rng import substream

MAX_N = 12
MAX_W = 3
MAX_ONEBIT_N = 5
LOG2E = math.log2(math.e)


# -- enumeration helpers --------------------------------------------------------

def _check_caps(N, w):
    if N > MAX_N or w > MAX_W:
        raise ValueError(f"enumeration cap exceeded: N={N} (max {MAX_N}), w={w} (max {MAX_W})")
    if not 1 <= w <= N:
        raise ValueError(f"need 1 <= w <= N, got w={w}, N={N}")


def truth_space(N: int) -> np.ndarray:
    """All Z in {0,1}^N, one per row, in binary counting order."""
    return np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.int8).reshape(-1, N)


def _sampling_index(N, w):
    """``idx[z, t]``: position in user_data_space of (I_t, Z_{I_t}) for truth row z."""
    zs = truth_space(N)
    subsets = list(itertools.combinations(range(N), w))
    weights = 1 << np.arange(w - 1, -1, -1)
    idx = np.empty((zs.shape[0], len(subsets)), dtype=np.int64)
    for t, I in enumerate(subsets):
        idx[:, t] = t * (1 << w) + zs[:, list(I)] @ weights
    return idx


def _aligned(kernel: ChannelKernel, N, w) -> np.ndarray:
    space = user_data_space(N, w)
    if kernel.inputs == space:
        return kernel.matrix
    pos = kernel.index()
    try:
        return kernel.matrix[[pos[x] for x in space]]
    except KeyError as exc:
        raise ValueError(f"kernel inputs do not cover user data for N={N}, w={w}") from exc


def _prior(prior, N):
    if prior is None:
        return np.full(2 ** N, 2.0 ** -N)
    pi = np.asarray(prior, dtype=float).reshape(-1)
    if pi.size != 2 ** N:
        raise ValueError(f"prior has {pi.size} entries, expected 2^{N}")
    if abs(pi.sum() - 1) > 1e-12 or np.any(pi < 0):
        raise ValueError("prior must be a probability vector")
    return pi


def infer_n(prior_len: int) -> int:
    N = int(round(math.log2(prior_len)))
    if 2 ** N != prior_len:
        raise ValueError("prior length is not a power of two")
    return N


def sketch_given_truth(kernel: ChannelKernel, N: int, w: int) -> np.ndarray:
    """P[S = s | Z = z] as a ``2^N x |S|`` matrix."""
    _check_caps(N, w)
    K = _aligned(kernel, N, w)
    idx = _sampling_index(N, w)
    out = np.zeros((idx.shape[0], K.shape[1]))
    for t in range(idx.shape[1]):
        out += K[idx[:, t]]
    return out / idx.shape[1]


def _mi_bits(pi, cond):
    ps = pi @ cond
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = cond * np.log2(cond / ps[None, :])
    terms = np.where(cond > 0, terms, 0.0)
    return max(0.0, float(pi @ terms.sum(axis=1)))


def exact_mutual_information(prior, w: int, kernel: ChannelKernel) -> float:
    """I(Z; S) in bits by full enumeration of Z and of the rated set."""
    N = infer_n(np.asarray(prior).size) if prior is not None else None
    if N is None:
        raise ValueError("prior is required (pass a uniform vector for the default model)")
    pi = _prior(prior, N)
    return _mi_bits(pi, sketch_given_truth(kernel, N, w))


def uniform_prior(N: int) -> np.ndarray:
    return np.full(2 ** N, 2.0 ** -N)


# -- posterior-pair bound -------------------------------------------------------

def overlap_weight(N: int, w: int) -> np.ndarray:
    """2^{|I1 & I2|} when (I1,Z1), (I2,Z2) agree on the overlap, else 0."""
    space = user_data_space(N, w)
    D = len(space)
    G = np.zeros((D, D))
    for a, (I1, z1) in enumerate(space):
        r1 = dict(zip(I1, z1))
        for c, (I2, z2) in enumerate(space):
            common = [i for i in I2 if i in r1]
            if all(r1[i] == z for i, z in zip(I2, z2) if i in r1):
                G[a, c] = 2.0 ** len(common)
    return G


def _pair_weight(N, w, pi):
    """P[both from one Z] / (P[d1] P[d2]) for the given prior."""
    idx = _sampling_index(N, w)
    D = len(user_data_space(N, w))
    C = idx.shape[1]
    T = np.zeros((pi.size, D))
    for t in range(C):
        T[np.arange(pi.size), idx[:, t]] += 1.0 / C
    pd = pi @ T
    joint = T.T @ (pi[:, None] * T)
    with np.errstate(divide="ignore", invalid="ignore"):
        G = np.where(np.outer(pd, pd) > 0, joint / np.outer(pd, pd), 0.0)
    return G, pd


def data_posteriors(kernel: ChannelKernel, N: int, w: int, prior=None):
    """``(P[S=s], P[(I,Z)=d | S=s])`` with the posterior as a ``|S| x D`` matrix."""
    _check_caps(N, w)
    pi = _prior(prior, N)
    K = _aligned(kernel, N, w)
    _, pd = _pair_weight(N, w, pi)
    joint = pd[:, None] * K
    ps = joint.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(ps[None, :] > 0, joint / ps[None, :], 0.0).T
    return ps, post, pd


def lemma5_rhs(kernel: ChannelKernel, N: int, w: int, prior=None) -> float:
    """E_S E[2^{|I1 & I2|} 1{Z1, Z2 agree} - 1] with both pairs drawn i.i.d.
    from the posterior given S, summed directly over the pairs.

    For a non-uniform prior the weight becomes the general ratio
    P[d1, d2 from one Z] / (P[d1] P[d2]).
    """
    _check_caps(N, w)
    pi = _prior(prior, N)
    G = overlap_weight(N, w) if prior is None else _pair_weight(N, w, pi)[0]
    ps, post, _ = data_posteriors(kernel, N, w, prior)
    total = 0.0
    for s in range(ps.size):
        if ps[s] > 0:
            total += ps[s] * (post[s] @ G @ post[s] - 1.0)
    return float(total)


def posterior_ratio_range(kernel: ChannelKernel, N: int, w: int, prior=None) -> tuple[float, float]:
    """min and max of P[d | S=s] / P[d] over atoms with positive probability."""
    ps, post, pd = data_posteriors(kernel, N, w, prior)
    mask = (ps[:, None] > 0) & (pd[None, :] > 0)
    r = post[mask] / np.broadcast_to(pd, post.shape)[mask]
    return float(r.min()), float(r.max())


# -- closed forms -----------------------------------------------------------------

def basic_dp_bound(epsilon: float) -> float:
    """epsilon * log2(e) bits."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return epsilon * LOG2E


def _log2(x) -> float:
    if isinstance(x, Fraction):
        return math.log2(x.numerator) - math.log2(x.denominator)
    return math.log2(x)


def fano_bound(I: float, M, M_d=1) -> float:
    """max(0, 1 - (I + 1) / (log2 M - log2 M_d)); M and M_d may be Fractions."""
    if not M > M_d or M_d < 1:
        raise ValueError(f"need M > M_d >= 1, got M={M}, M_d={M_d}")
    return max(0.0, 1.0 - (I + 1.0) / (_log2(M) - _log2(M_d)))


def ball_size(N: int, K: int, d: int) -> Fraction:
    """sum_{i<=d} C(N,i)(K-1)^i / K!, kept exact (it is rarely an integer)."""
    if not 0 <= d <= N or K < 2:
        raise ValueError(f"need 0 <= d <= N and K >= 2, got d={d}, N={N}, K={K}")
    return Fraction(sum(math.comb(N, i) * (K - 1) ** i for i in range(d + 1)), math.factorial(K))


def overlap_pmf(N: int, w: int) -> list[Fraction]:
    """P[|I1 & I2| = k] for two independent uniform w-subsets, k = 0..w."""
    tot = math.comb(N, w)
    return [Fraction(math.comb(w, k) * math.comb(N - w, w - k), tot) for k in range(w + 1)]


def weak_mi_bound(N: int, w: int, epsilon: float) -> float:
    """e^{2 eps} sum_k P[|I1 & I2| = k] (1 - 2^-k): bounds lemma5_rhs for any eps-DP kernel."""
    pmf = overlap_pmf(N, w)
    return math.exp(2 * epsilon) * sum(float(pk) * (1 - 2.0 ** -k) for k, pk in enumerate(pmf))


def strong_mi_bound(N: int, w: int, epsilon: float) -> float:
    """2(e^eps - 1)^2 w/N plus the multi-overlap remainder; needs eps < ln 2."""
    if not epsilon < math.log(2):
        raise ValueError("the refined bound needs epsilon < ln 2")
    pmf = [float(x) for x in overlap_pmf(N, w)]
    mean = sum(k * pk for k, pk in enumerate(pmf))
    above = sum(pmf[2:])
    return 2 * math.expm1(epsilon) ** 2 * w / N + math.exp(2 * epsilon) * (mean - pmf[1] + above)


def binomial_ratio_check(N: int, w: int) -> tuple[Fraction, Fraction, Fraction]:
    """C(N-w, w)/C(N, w) as the exact product, 1 - w^2/N, and |difference|."""
    if 2 * w > N:
        raise ValueError(f"need 2w <= N, got w={w}, N={N}")
    exact = Fraction(1)
    for k in range(w):
        exact *= Fraction(N - k - w, N - k)
    approx = 1 - Fraction(w * w, N)
    return exact, approx, abs(exact - approx)


REGIMES = ("basic", "scarce-weak", "scarce-strong", "adaptive-w1")


def sample_complexity_floor(regime: str, N: int, w: int = 1, epsilon: float = 1.0) -> float:
    """Dominant term of each user-count lower bound; order of growth only."""
    if regime == "basic":
        if epsilon <= 0:
            raise ValueError("basic floor needs epsilon > 0")
        return N / (epsilon * LOG2E)
    if regime == "scarce-weak":
        return N * N / (w * w)
    if regime == "scarce-strong":
        if not epsilon < math.log(2):
            raise ValueError(f"scarce-strong needs epsilon < ln 2, got {epsilon}")
        if w > N ** (1 / 3) + 1e-12:
            raise ValueError(f"scarce-strong needs w <= N^(1/3), got w={w}, N={N}")
        return N * N / w
    if regime == "adaptive-w1":
        if w != 1:
            raise ValueError("adaptive-w1 floor is for w = 1")
        return N * math.log2(N)
    raise ValueError(f"unknown regime {regime!r}")


# -- one-bit extremal search ------------------------------------------------------

def onebit_sketch_search(N: int) -> tuple[float, list]:
    """Largest I(Z; 1_A(I, Z)) over every A within [N] x {0,1}, with w = 1.

    Returns ``(max_mi, A)`` where A lists ``(item, rating)`` pairs, 0-indexed.
    Ties go to the first A in bitmask order (bit 2*i + z is ``(i, z)``).
    """
    if not 1 <= N <= MAX_ONEBIT_N:
        raise ValueError(f"one-bit search enumerates 2^(2N) sets; N={N} exceeds {MAX_ONEBIT_N}")
    zs = truth_space(N)
    # hits[z, a]: 1 if point a = (i, z_i) is reachable under truth z
    hits = np.zeros((zs.shape[0], 2 * N))
    for i in range(N):
        hits[np.arange(zs.shape[0]), 2 * i + zs[:, i]] = 1.0
    masks = np.arange(2 ** (2 * N))
    A = ((masks[:, None] >> np.arange(2 * N)[None, :]) & 1).astype(float)
    p1 = (A @ hits.T) / N                    # P[S=1 | z] per set
    q = p1.mean(axis=1)

    def h(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = -x * np.log2(x) - (1 - x) * np.log2(1 - x)
        return np.nan_to_num(v)

    mi = np.maximum(h(q) - h(p1).mean(axis=1), 0.0)
    best = int(np.argmax(mi))
    chosen = [(a // 2, a % 2) for a in range(2 * N) if best >> a & 1]
    return float(mi[best]), chosen


def set_sketch_kernel(N: int, w: int, A) -> ChannelKernel:
    """Deterministic kernel S = 1 iff (I, Z) lies in A (w = 1: A holds (item, rating))."""
    A = set(A)
    if w == 1:
        fn = lambda x: int((x[0][0], x[1][0]) in A)
    else:
        fn = lambda x: int(x in A)
    return ChannelKernel.deterministic(user_data_space(N, w), fn, outputs=[0, 1])


# -- random DP kernels --------------------------------------------------------------

def random_dp_kernel(D_inputs: list, epsilon: float, rng: np.random.Generator, family: str = "tilt",
                     n_out: int | None = None) -> ChannelKernel:
    """A random kernel over ``D_inputs`` that is epsilon-DP for all input pairs.

    ``tilt``  entries c_s e^{eps u / 2}, u ~ U[0,1], then row normalization;
              every column ratio stays within e^{eps}.
    ``rr``    randomized response over a random deterministic labelling; the
              ratio is exactly e^{eps} whenever two labels differ.
    ``clip``  a random positive matrix clipped columnwise into a band of width
              e^{eps}, renormalized and re-verified, repeating until it passes.
    """
    D = len(D_inputs)
    m = int(n_out if n_out is not None else rng.integers(2, 5))
    if family == "tilt":
        c = rng.random(m) + 0.05
        M = c[None, :] * np.exp(epsilon * rng.random((D, m)) / 2)
    elif family == "rr":
        labels = rng.integers(0, m, size=D)
        e = math.exp(epsilon)
        M = np.full((D, m), 1.0 / (e + m - 1))
        M[np.arange(D), labels] = e / (e + m - 1)
    elif family == "clip":
        M = rng.random((D, m)) + 1e-3
        for _ in range(200):
            M = M / M.sum(axis=1, keepdims=True)
            g = np.exp(np.log(M).mean(axis=0))
            M = np.clip(M, g * math.exp(-epsilon / 2), g * math.exp(epsilon / 2))
            M = M / M.sum(axis=1, keepdims=True)
            if verify_dp_kernel(ChannelKernel(list(D_inputs), list(range(m)), M), epsilon):
                break
        else:
            raise RuntimeError("clip family failed to reach the DP constraint set")
    else:
        raise ValueError(f"unknown kernel family {family!r}")
    M = M / M.sum(axis=1, keepdims=True)
    return ChannelKernel(list(D_inputs), list(range(m)), M)


def random_postprocess(kernel: ChannelKernel, rng: np.random.Generator) -> ChannelKernel:
    """Merge outputs through a random map onto a smaller alphabet."""
    from .privacy import postprocess
    k = max(1, len(kernel.outputs) - int(rng.integers(0, len(kernel.outputs))))
    f = dict(zip(kernel.outputs, rng.integers(0, k, size=len(kernel.outputs)).tolist()))
    return postprocess(kernel, lambda o: f[o])


# -- oracle suite -------------------------------------------------------------------

SLACK = 1e-9


@dataclass
class BoundReport:
    N: int
    w: int
    epsilon: float
    family: str
    kernel_id: int
    exact_mi: float
    lemma5: float
    basic: float
    weak: float
    strong: float | None
    post_lo: float
    post_hi: float
    flags: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    CSV_FIELDS = ("N", "w", "epsilon", "family", "kernel_id", "exact_mi", "lemma5", "basic",
                  "weak", "strong", "post_lo", "post_hi", "passed")

    def csv_row(self) -> list:
        strong = "" if self.strong is None else repr(self.strong)
        return [self.N, self.w, repr(self.epsilon), self.family, self.kernel_id, repr(self.exact_mi),
                repr(self.lemma5), repr(self.basic), repr(self.weak), strong, repr(self.post_lo),
                repr(self.post_hi), int(self.passed)]


def check_kernel(kernel: ChannelKernel, N: int, w: int, epsilon: float, family="given", kernel_id=0) -> BoundReport:
    """Every bound whose hypotheses the kernel meets, evaluated exactly."""
    prior = uniform_prior(N)
    mi = exact_mutual_information(prior, w, kernel)
    rhs = lemma5_rhs(kernel, N, w)
    lo, hi = posterior_ratio_range(kernel, N, w)
    e = math.exp(epsilon)
    strong = strong_mi_bound(N, w, epsilon) if epsilon < math.log(2) else None
    flags = {
        "dp": bool(verify_dp_kernel(kernel, epsilon)),
        "basic": mi <= basic_dp_bound(epsilon) + SLACK,
        "lemma5": mi <= rhs + SLACK,
        "weak": rhs <= weak_mi_bound(N, w, epsilon) + SLACK,
        "posterior": lo >= (1 / e) * (1 - SLACK) and hi <= e * (1 + SLACK),
    }
    if strong is not None:
        flags["strong"] = rhs <= strong + SLACK
    return BoundReport(N, w, epsilon, family, kernel_id, mi, rhs, basic_dp_bound(epsilon),
                       weak_mi_bound(N, w, epsilon), strong, lo, hi, flags)


def run_oracle_suite(max_n: int = 3, ws=(1, 2), epsilons=(0.3, 0.7), n_kernels: int = 200,
                     seed: int = 0, families=("tilt", "rr", "clip")) -> list[BoundReport]:
    """Random epsilon-DP kernels on every (N <= max_n, w, eps) cell, all checks.

    Kernel j of a cell uses family ``families[j % len(families)]`` and stream
    ``bounds:N:w:eps-index:j``.
    """
    if max_n > MAX_N:
        raise ValueError(f"max_n={max_n} exceeds enumeration cap {MAX_N}")
    reports = []
    for N in range(2, max_n + 1):
        for w in ws:
            if w > N or w > MAX_W:
                continue
            space = user_data_space(N, w)
            for ei, eps in enumerate(epsilons):
                for j in range(n_kernels):
                    fam = families[j % len(families)]
                    rng = substream(seed, "bounds", N, w, ei, j)
                    k = random_dp_kernel(space, eps, rng, fam)
                    reports.append(check_kernel(k, N, w, eps, fam, j))
    return reports


def data_processing_holds(kernel: ChannelKernel, N: int, w: int, rng, trials: int = 20) -> bool:
    """I(Z; f(S)) <= I(Z; S) for random output maps f."""
    prior = uniform_prior(N)
    base = exact_mutual_information(prior, w, kernel)
    return all(exact_mutual_information(prior, w, random_postprocess(kernel, rng)) <= base + SLACK
               for _ in range(trials))
