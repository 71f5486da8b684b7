"""Random restrictions, restricted functions and survival scans."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import partial

import numpy as np

from .core.functions import BooleanFunction, Tribes
from .core.points import PartialPoint, arrays_to_masks
from .rng import map_blocks, proportion


@dataclass(frozen=True)
class Restriction:
    """Coordinates in ``fixed`` are set by ``signs`` (bit 1 = -1); the rest are alive."""

    n: int
    fixed: int
    signs: int = 0

    def __post_init__(self):
        object.__setattr__(self, "signs", self.signs & self.fixed)

    @property
    def S(self) -> list[int]:
        return [i for i in range(self.n) if (self.fixed >> i) & 1]

    @property
    def alive(self) -> list[int]:
        return [i for i in range(self.n) if not (self.fixed >> i) & 1]

    def point(self) -> PartialPoint:
        return PartialPoint(self.n, self.fixed, self.signs)

    def union(self, inner: "Restriction") -> "Restriction":
        """Compose with a restriction ``inner`` of the alive coordinates (re-indexed ascending)."""
        alive = self.alive
        if inner.n != len(alive):
            raise ValueError("inner restriction must act on the alive coordinates")
        fixed, signs = self.fixed, self.signs
        for j, i in enumerate(alive):
            if (inner.fixed >> j) & 1:
                fixed |= 1 << i
                if (inner.signs >> j) & 1:
                    signs |= 1 << i
        return Restriction(self.n, fixed, signs)


def sample_fixed_alive_batch(n: int, k_alive: int, size: int, rng: np.random.Generator):
    if not 0 <= k_alive <= n:
        raise ValueError(f"k_alive={k_alive} outside [0, {n}]")
    order = np.argsort(rng.random((size, n)), axis=1)
    fixed = np.ones((size, n), dtype=bool)
    np.put_along_axis(fixed, order[:, :k_alive], False, axis=1)
    neg = (rng.random((size, n)) < 0.5) & fixed
    return fixed, neg


def sample_independent_batch(n: int, p_fix: float, size: int, rng: np.random.Generator):
    if not 0.0 <= p_fix <= 1.0:
        raise ValueError(f"p_fix={p_fix} outside [0, 1]")
    fixed = rng.random((size, n)) < p_fix
    neg = (rng.random((size, n)) < 0.5) & fixed
    return fixed, neg


def _single(fixed, neg) -> Restriction:
    f, s = arrays_to_masks(fixed, neg)
    return Restriction(fixed.shape[1], int(f[0]), int(s[0]))


def sample_fixed_alive(n: int, k_alive: int, rng: np.random.Generator) -> Restriction:
    """Uniform (n - k_alive)-subset S with uniform signs; exactly k_alive coordinates stay alive."""
    return _single(*sample_fixed_alive_batch(n, k_alive, 1, rng))


def sample_independent(n: int, p_fix: float, rng: np.random.Generator) -> Restriction:
    """Each coordinate fixed independently with probability p_fix."""
    return _single(*sample_independent_batch(n, p_fix, 1, rng))


def restrict(f: BooleanFunction, r: Restriction) -> BooleanFunction:
    if r.n != f.n:
        raise ValueError(f"restriction arity {r.n} != function arity {f.n}")
    return f.restrict(r.fixed, r.signs)


def restricted_stats(f: BooleanFunction, fixed: np.ndarray, neg: np.ndarray):
    """(means, variances, constant flags) of f|R for a batch of restrictions."""
    mean = f.mean_batch(fixed, neg)
    const = f.constant_batch(fixed, neg)
    var = np.where(const, 0.0, mean * (1 - mean))
    return mean, var, const


@dataclass(frozen=True)
class ScanResult:
    rho: float
    mode: str
    trials: int
    seed: int
    p_constant: float
    p_constant_se: float
    var_min: float
    var_q05: float
    var_q50: float
    var_q95: float
    mean_restricted_mean: float
    mean_restricted_mean_se: float
    k_alive: int | None = None
    p_fix: float | None = None

    def as_dict(self):
        return asdict(self)


def _scan_block(f, mode, param, rng, size):
    if mode == "fixed":
        fixed, neg = sample_fixed_alive_batch(f.n, param, size, rng)
    else:
        fixed, neg = sample_independent_batch(f.n, param, size, rng)
    mean, var, const = restricted_stats(f, fixed, neg)
    return int(const.sum()), var, float(mean.sum()), float((mean ** 2).sum())


def alive_count(rho: float, n: int) -> int:
    return min(n, math.ceil(rho * n - 1e-9))


def scan(f: BooleanFunction, rho_grid, trials: int, seed: int, mode: str = "fixed",
         workers: int = 1) -> list[ScanResult]:
    """Survival and variance profile of f|R for each alive fraction rho."""
    if mode in ("indep", "independent"):
        mode = "independent"
    elif mode != "fixed":
        raise ValueError(f"unknown mode {mode!r}")
    out = []
    for tag, rho in enumerate(rho_grid):
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"rho={rho} outside [0, 1]")
        param = alive_count(rho, f.n) if mode == "fixed" else 1.0 - rho
        parts = map_blocks(partial(_scan_block, f, mode, param), trials, seed, tag=tag, workers=workers)
        hits = sum(p[0] for p in parts)
        var = np.concatenate([p[1] for p in parts])
        s1 = sum(p[2] for p in parts)
        s2 = sum(p[3] for p in parts)
        pc, se = proportion(hits, trials)
        mm = s1 / trials
        mse = math.sqrt(max(s2 / trials - mm ** 2, 0.0) / trials)
        q = np.quantile(var, [0.05, 0.5, 0.95])
        out.append(ScanResult(
            rho=float(rho), mode=mode, trials=trials, seed=seed,
            p_constant=pc, p_constant_se=se,
            var_min=float(var.min()), var_q05=float(q[0]), var_q50=float(q[1]), var_q95=float(q[2]),
            mean_restricted_mean=mm, mean_restricted_mean_se=mse,
            k_alive=param if mode == "fixed" else None,
            p_fix=param if mode == "independent" else None,
        ))
    return out


def tribes_survival_formula(w: int, n: int) -> float:
    """P[TR|R == 1] when each variable is fixed with probability 1 - 1/w."""
    if w < 1 or n % w:
        raise ValueError(f"n={n} must be a multiple of w={w}")
    return (1 - (0.5 + 0.5 / w) ** w) ** (n // w)


def _tribes_one_block(f, p_fix, rng, size):
    fixed, neg = sample_independent_batch(f.n, p_fix, size, rng)
    shape = (size, f.clauses, f.w)
    return int((fixed & neg).reshape(shape).any(axis=2).all(axis=1).sum())


def tribes_survival_mc(w: int, n: int | None, trials: int, seed: int, workers: int = 1):
    """Monte Carlo estimate (p, se) of P[TR|R == 1] at fixing probability 1 - 1/w."""
    f = Tribes(w, n)
    hits = sum(map_blocks(partial(_tribes_one_block, f, 1 - 1 / w), trials, seed, workers=workers))
    return proportion(hits, trials)
