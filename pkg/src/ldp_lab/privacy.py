"""The epsilon-DP bit release, budget accounting and a kernel-level DP checker.

epsilon is a natural-log exponent throughout. Callers that compare against
information measured in bits multiply by ``log2(e)`` themselves.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelKernel

RATIO_SLACK = 1e-9


def keep_probability(epsilon: float) -> float:
    """Probability that the released bit equals the private bit."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    # 1/(1+e^-eps) avoids overflow for large epsilon
    return 1.0 / (1.0 + math.exp(-epsilon))


def dp_bit_release(bits, epsilon: float, rng: np.random.Generator):
    """Flip each bit independently with probability ``1/(1+e^epsilon)``.

    Accepts a scalar or an array; returns the same shape (int8 for arrays).
    """
    flip_p = 1.0 - keep_probability(epsilon)
    arr = np.asarray(bits)
    flips = rng.random(arr.shape) < flip_p
    out = (arr.astype(np.int8) ^ flips).astype(np.int8)
    return int(out) if out.ndim == 0 else out


def hat_epsilon(epsilon: float) -> float:
    """Signal attenuation 2(e^eps - 1)/(e^eps + 1) of the bit-release channel."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return 2.0 * math.tanh(epsilon / 2.0)


def rr_kernel(epsilon: float) -> ChannelKernel:
    """The bit-release mechanism as a 2x2 kernel."""
    k = keep_probability(epsilon)
    return ChannelKernel([0, 1], [0, 1], [[k, 1 - k], [1 - k, k]])


@dataclass
class PrivacyBudget:
    epsilon: float
    components: list = field(default_factory=list)

    @property
    def spent(self) -> float:
        return math.fsum(self.components)

    def spend(self, eps: float) -> None:
        if eps < 0:
            raise ValueError("cannot spend a negative budget")
        if self.spent + eps > self.epsilon * (1 + 1e-12):
            raise ValueError(f"budget exceeded: {self.spent} + {eps} > {self.epsilon}")
        self.components.append(eps)


def split_budget(epsilon: float, Q: int, budget: PrivacyBudget | None = None) -> float:
    """Per-release epsilon for Q releases that compose to ``epsilon``."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    per = epsilon / Q
    if budget is not None:
        for _ in range(Q):
            budget.spend(per)
    return per


@dataclass
class DPCheck:
    passed: bool
    max_ratio: float
    witness: tuple | None = None   # (x, x', y) achieving max_ratio

    def __bool__(self):
        return self.passed


def _neighbor_pairs(kernel: ChannelKernel, relation: str):
    n = len(kernel.inputs)
    if relation == "single-rating":
        pairs = []
        for a, b in itertools.permutations(range(n), 2):
            (ia, za), (ib, zb) = kernel.inputs[a], kernel.inputs[b]
            if ia == ib and sum(x != y for x, y in zip(za, zb)) == 1:
                pairs.append((a, b))
        return pairs
    raise ValueError(f"unknown neighbor relation {relation!r}")


def verify_dp_kernel(kernel: ChannelKernel, epsilon: float, neighbor_relation: str = "all-pairs") -> DPCheck:
    """Check P[y|x] <= e^eps P[y|x'] for every neighbouring (x, x') and output y.

    The bound is tested with relative slack ``RATIO_SLACK``. A zero
    denominator with a positive numerator is an infinite ratio.
    """
    kernel = ChannelKernel(kernel.inputs, kernel.outputs, kernel.matrix)
    m = kernel.matrix
    if m.size == 0:
        return DPCheck(True, 1.0)
    bound = math.exp(epsilon) * (1 + RATIO_SLACK)
    if neighbor_relation == "all-pairs":
        # worst pair per output column is (argmax, argmin)
        hi, lo = m.argmax(axis=0), m.argmin(axis=0)
        cols = np.arange(m.shape[1])
        top, bot = m[hi, cols], m[lo, cols]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(top > 0, top / bot, 1.0)
        y = int(np.argmax(ratio))
        worst = float(ratio[y])
        witness = (kernel.inputs[hi[y]], kernel.inputs[lo[y]], kernel.outputs[y])
        return DPCheck(worst <= bound, worst, witness if worst > 1.0 else None)
    pairs = _neighbor_pairs(kernel, neighbor_relation)
    if not pairs:
        return DPCheck(True, 1.0)
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    num, den = m[a], m[b]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num > 0, num / den, 1.0)
    r, y = divmod(int(np.argmax(ratio)), m.shape[1])
    worst = float(ratio[r, y])
    witness = (kernel.inputs[a[r]], kernel.inputs[b[r]], kernel.outputs[y])
    return DPCheck(worst <= bound, worst, witness if worst > 1.0 else None)


def compose_kernels(*kernels: ChannelKernel) -> ChannelKernel:
    """Independent releases on the same input: outputs are tuples."""
    inputs = kernels[0].inputs
    for k in kernels[1:]:
        if k.inputs != inputs:
            raise ValueError("kernels must share the same input list")
    outputs = list(itertools.product(*(k.outputs for k in kernels)))
    m = kernels[0].matrix
    for k in kernels[1:]:
        m = (m[:, :, None] * k.matrix[:, None, :]).reshape(len(inputs), -1)
    return ChannelKernel(list(inputs), outputs, m)


def chain(inner: ChannelKernel, outer: ChannelKernel) -> ChannelKernel:
    """Feed the output of ``inner`` into ``outer``."""
    pos = {x: i for i, x in enumerate(outer.inputs)}
    idx = [pos[o] for o in inner.outputs]
    return ChannelKernel(list(inner.inputs), list(outer.outputs), inner.matrix @ outer.matrix[idx])


def postprocess(kernel: ChannelKernel, f) -> ChannelKernel:
    """Apply a deterministic map ``f`` to the kernel's outputs."""
    images = [f(o) for o in kernel.outputs]
    outs = sorted(set(images), key=repr)
    pos = {o: j for j, o in enumerate(outs)}
    m = np.zeros((len(kernel.inputs), len(outs)))
    for j, im in enumerate(images):
        m[:, pos[im]] += kernel.matrix[:, j]
    return ChannelKernel(list(kernel.inputs), outs, m)
