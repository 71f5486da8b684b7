"""Walsh-Hadamard transform of truth tables and Fourier-side quantities.

Coefficient ``S`` (a subset mask) is ``E[f * chi_S]`` with
``chi_S(x) = prod_{i in S} x_i = (-1)^{popcount(S & k)}`` at table index k.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .functions import TABLE_CAP, ArityError, TruthTable


@dataclass(frozen=True)
class FourierCoefficients:
    n: int
    coeffs: np.ndarray = field(repr=False)

    def __getitem__(self, mask: int) -> float:
        return float(self.coeffs[mask])

    def weight(self) -> float:
        return float(np.sum(self.coeffs ** 2))

    def level_weights(self) -> np.ndarray:
        deg = popcounts(self.n)
        return np.bincount(deg, weights=self.coeffs ** 2, minlength=self.n + 1)

    def influences(self) -> np.ndarray:
        """Spectral influences sum_{S containing i} f^(S)^2."""
        sq = self.coeffs ** 2
        masks = np.arange(sq.size)
        return np.array([sq[(masks >> i) & 1 == 1].sum() for i in range(self.n)])


def popcounts(n: int) -> np.ndarray:
    deg = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        deg[1 << i: 1 << (i + 1)] = deg[: 1 << i] + 1
    return deg


def _butterfly(x: np.ndarray, n: int) -> np.ndarray:
    for i in range(n):
        a = x.reshape(-1, 2, 1 << i)
        lo, hi = a[:, 0, :], a[:, 1, :]
        x = np.stack([lo + hi, lo - hi], axis=1).reshape(-1)
    return x


def wht_unnormalized(values: np.ndarray, n: int) -> np.ndarray:
    """Sum_k v_k (-1)^{|S & k|}; integer input stays integer (exact)."""
    if n > TABLE_CAP:
        raise ArityError(f"transform capped at n={TABLE_CAP}")
    v = np.asarray(values)
    dtype = np.int64 if np.issubdtype(v.dtype, np.integer) else np.float64
    return _butterfly(v.astype(dtype), n)


def wht(t: TruthTable) -> FourierCoefficients:
    return FourierCoefficients(t.n, wht_unnormalized(t.values, t.n) / float(1 << t.n))


def wht_real(values: np.ndarray, n: int) -> FourierCoefficients:
    return FourierCoefficients(n, wht_unnormalized(np.asarray(values, dtype=np.float64), n) / float(1 << n))


def inverse_wht_values(fc: FourierCoefficients) -> np.ndarray:
    """Real values sum_S c_S chi_S at every vertex."""
    return _butterfly(np.asarray(fc.coeffs, dtype=np.float64), fc.n)


def inverse_wht(fc: FourierCoefficients) -> TruthTable:
    vals = inverse_wht_values(fc)
    rounded = np.rint(vals)
    if np.max(np.abs(vals - rounded), initial=0.0) > 1e-9 or not np.all((rounded == 0) | (rounded == 1)):
        raise ValueError("coefficients do not describe a {0,1}-valued function")
    return TruthTable(fc.n, rounded.astype(np.uint8))


def influence_spectral_exact(t: TruthTable, i: int) -> Fraction:
    """sum_{S containing i} f^(S)^2 as an exact rational via the integer transform."""
    w = wht_unnormalized(t.values.astype(np.int64), t.n)
    masks = np.arange(w.size)
    sel = w[(masks >> i) & 1 == 1]
    total = sum(int(v) * int(v) for v in sel)
    return Fraction(total, 1 << (2 * t.n))


def parseval_residual(t: TruthTable) -> float:
    fc = wht(t)
    return abs(fc.weight() - float(t.mean))  # f^2 = f for {0,1}-valued f


def level1_ratio(fc: FourierCoefficients) -> float:
    """|grad f(0)|^2 / (alpha^2 ln(e/alpha)) with alpha = f(0); the level-1 constant diagnostic."""
    alpha = fc.coeffs[0]
    if alpha <= 0:
        return float("nan")
    grad_sq = sum(fc.coeffs[1 << i] ** 2 for i in range(fc.n))
    return float(grad_sq / (alpha ** 2 * np.log(np.e / alpha)))
