"""Scalar inequalities and information measures (logs in bits unless noted)."""
from __future__ import annotations

import numpy as np

from .functions import BooleanFunction
from .points import PartialPoint


def binary_entropy(x):
    """H(x) = x log2(1/x) + (1-x) log2(1/(1-x)), with H(0) = H(1) = 0."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(x * np.log2(x)) - (1 - x) * np.log2(1 - x)
    h = np.where((x <= 0) | (x >= 1), 0.0, h)
    return h if h.ndim else float(h)


def kl_bits(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in bits; infinite when p is not absolutely continuous w.r.t. q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    s = p > 0
    if np.any(q[s] <= 0):
        return float("inf")
    return float(np.sum(p[s] * np.log2(p[s] / q[s])))


def entropy_gap_bound(x):
    """Slack of 1 - H(x) <= 4 (x - 1/2)^2; nonnegative on [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    return 4 * (x - 0.5) ** 2 - (1 - binary_entropy(x))


def bernoulli_power_slack(x, p):
    """Signed slack of the (1+x)^p vs 1+xp comparison.

    For p >= 1 returns (1+x)^p - (1+xp), which should be >= 0; for
    0 <= p <= 1 returns (1+xp) - (1+x)^p, also >= 0.
    """
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    d = (1 + x) ** p - (1 + x * p)
    return np.where(p >= 1, d, -d)


def level1_ratio(f: BooleanFunction) -> float:
    """|grad f(0)|^2 / (f(0)^2 ln(e / f(0))); reported, never bounded by a fixed constant."""
    zero = PartialPoint.alive_point(f.n)
    alpha = f.cond_mean(zero)
    if alpha <= 0:
        return float("nan")
    g = f.grad_batch(*zero.arrays())[0]
    return float(np.dot(g, g) / (alpha ** 2 * np.log(np.e / alpha)))


def variance_influence_slack(f: BooleanFunction) -> float:
    """sum_i INF_i (flip) - Var[f]; nonnegative."""
    return float(np.sum(f.influences_flip()) - f.variance)
