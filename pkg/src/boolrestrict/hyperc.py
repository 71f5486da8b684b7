"""Continuous revelation process, exact moment oracles and influence tails.

Coordinate i is revealed at a uniform time tau_i in [0, 1] with a fair sign,
so at a fixed time t each coordinate is independently fixed with probability
t. Exact oracles enumerate the 3^n partial points with those weights.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import partial

import numpy as np

from .core.functions import TERNARY_CAP, ArityError, BooleanFunction, ternary_index, ternary_table
from .core.fourier import popcounts, wht_real, wht_unnormalized
from .core.points import BitPoint, PartialPoint, bits_to_index
from .process import Path, simulate
from .rng import map_blocks, proportion

ORACLE_TOL = 1e-9


def _digits(n: int) -> np.ndarray:
    s = np.arange(3 ** n)
    return (s[:, None] // 3 ** np.arange(n)) % 3


class MultilinearFunction:
    """f(x) = sum_S c_S prod_{i in S} x_i on [-1, 1]^n, stored densely (n <= 12)."""

    def __init__(self, n: int, coeffs):
        if n > TERNARY_CAP:
            raise ArityError(f"n={n} exceeds the cap {TERNARY_CAP}")
        c = np.asarray(coeffs, dtype=np.float64)
        if c.shape != (1 << n,):
            raise ValueError(f"expected {1 << n} coefficients, got {c.shape}")
        self.n = n
        self.coeffs = c
        self._vals = None
        self._tern = None

    @classmethod
    def from_boolean(cls, f: BooleanFunction) -> "MultilinearFunction":
        return cls(f.n, wht_real(f.table().values, f.n).coeffs)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "MultilinearFunction":
        """Centred Gaussian coefficients with scale 2^{-|S|/2}."""
        scale = 2.0 ** (-popcounts(n) / 2)
        return cls(n, rng.standard_normal(1 << n) * scale)

    @classmethod
    def constant(cls, n: int, c: float) -> "MultilinearFunction":
        coeffs = np.zeros(1 << n)
        coeffs[0] = c
        return cls(n, coeffs)

    @property
    def vertex_values(self) -> np.ndarray:
        """f at the 2^n vertices, index k has x_i = -1 where bit i of k is set."""
        if self._vals is None:
            self._vals = wht_unnormalized(self.coeffs, self.n)
        return self._vals

    @property
    def ternary(self) -> np.ndarray:
        if self._tern is None:
            self._tern = ternary_table(self.vertex_values, self.n)
        return self._tern

    def at(self, x: PartialPoint) -> float:
        return float(self.ternary[ternary_index(*x.arrays())[0]])

    def grad_table(self) -> np.ndarray:
        """(3^n, n) array of d_i f at every partial point, for every i."""
        n = self.n
        d = _digits(n)
        pw = 3 ** np.arange(n)
        s = np.arange(3 ** n)
        base = s[:, None] - d * pw
        t = self.ternary
        return (t[base + pw] - t[base + 2 * pw]) / 2

    def influences(self) -> np.ndarray:
        pc = np.arange(1 << self.n)
        c2 = self.coeffs ** 2
        return np.array([c2[(pc >> i) & 1 == 1].sum() for i in range(self.n)])

    @property
    def sup_norm(self) -> float:
        # a multilinear function on the box attains its extremes at vertices
        return float(np.abs(self.vertex_values).max())


def reveal_weights(n: int, t: float) -> np.ndarray:
    """Probability of each partial point at reveal time t."""
    alive = (_digits(n) == 0).sum(axis=1)
    return (1 - t) ** alive * (t / 2) ** (n - alive)


def exact_moment(f: MultilinearFunction, t: float, p: float) -> float:
    """E|f(X(t))|^p under independent reveals with probability t."""
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(reveal_weights(f.n, t) @ np.abs(f.ternary) ** p)


@dataclass(frozen=True)
class HCResult:
    t: float
    T: float
    lhs: float
    rhs: float
    margin: float
    holds: bool

    def as_dict(self):
        return asdict(self)


def hc_check(f: MultilinearFunction, t: float, T: float) -> HCResult:
    """(E|f(X(t))|^{2+e})^{1/(2+e)} against (E f(X(T))^2)^{1/2} with e = T - t."""
    if not 0 <= t <= T <= 1:
        raise ValueError("need 0 <= t <= T <= 1")
    p = 2 + (T - t)
    lhs = exact_moment(f, t, p) ** (1 / p)
    rhs = exact_moment(f, T, 2) ** 0.5
    return HCResult(t, T, lhs, rhs, rhs - lhs, rhs - lhs >= -ORACLE_TOL)


def grid_pairs(step: float) -> list[tuple[float, float]]:
    k = int(round(1 / step))
    pts = [round(i / k, 12) for i in range(k + 1)]
    return [(a, b) for a in pts for b in pts if a <= b]


def hc_margins(f: MultilinearFunction, pairs) -> np.ndarray:
    """Margins for many (t, T) pairs at once."""
    ts = sorted({x for pr in pairs for x in pr})
    absval = np.abs(f.ternary)
    W = {t: reveal_weights(f.n, t) for t in ts}
    out = np.empty(len(pairs))
    for k, (t, T) in enumerate(pairs):
        p = 2 + (T - t)
        lhs = float(W[t] @ absval ** p) ** (1 / p)
        rhs = float(W[T] @ absval ** 2) ** 0.5
        out[k] = rhs - lhs
    return out


@dataclass(frozen=True)
class GradientMomentResult:
    t: float
    grad_moment: float          # E|grad f(X(t))|^2 over all coordinates
    grad_bound: float           # ||f||_inf^2 / (1 - t)
    grad_slack: float
    coord_moments: list
    influences: list
    coord_slack_min: float
    holds: bool

    def as_dict(self):
        return asdict(self)


def gradient_moment_check(f: MultilinearFunction, t: float) -> GradientMomentResult:
    if not 0 <= t < 1:
        raise ValueError("t must lie in [0, 1)")
    w = reveal_weights(f.n, t)
    g2 = f.grad_table() ** 2
    per = w @ g2
    total = float(per.sum())
    bound = f.sup_norm ** 2 / (1 - t)
    infl = f.influences()
    cs = float((infl - per).min(initial=math.inf)) if f.n else math.inf
    return GradientMomentResult(t, total, bound, bound - total, per.tolist(), infl.tolist(), cs,
                        bound - total >= -ORACLE_TOL and cs >= -ORACLE_TOL)


def second_moment_curve(f: MultilinearFunction, ts) -> np.ndarray:
    return np.array([exact_moment(f, t, 2) for t in ts])


@dataclass(frozen=True)
class HCSweep:
    functions: int
    pairs: int
    min_margin: float
    hc_violations: int
    min_gradient_slack: float
    gradient_violations: int
    monotone_second_moment: bool

    def as_dict(self):
        return asdict(self)


def hc_sweep(fs, step: float = 0.1, prop_ts=(0.0, 0.25, 0.5, 0.9)) -> HCSweep:
    pairs = grid_pairs(step)
    ts = sorted({a for a, _ in pairs})
    mins, slacks, hv, pv, mono = [], [], 0, 0, True
    for f in fs:
        m = hc_margins(f, pairs)
        mins.append(m.min())
        hv += int((m < -ORACLE_TOL).sum())
        for t in prop_ts:
            r = gradient_moment_check(f, t)
            s = min(r.grad_slack, r.coord_slack_min)
            slacks.append(s)
            pv += int(not r.holds)
        curve = second_moment_curve(f, ts)
        mono &= bool(np.all(np.diff(curve) >= -ORACLE_TOL))
    return HCSweep(len(mins), len(pairs), float(min(mins)), hv, float(min(slacks)), pv, mono)


def boolean_functions(n: int):
    """All 2^(2^n) Boolean functions of n variables as multilinear functions."""
    N = 1 << n
    for code in range(1 << N):
        vals = ((code >> np.arange(N)) & 1).astype(np.float64)
        yield MultilinearFunction(n, wht_real(vals, n).coeffs)


def random_functions(count: int, n_max: int, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    for _ in range(count):
        n = int(rng.integers(1, n_max + 1))
        yield MultilinearFunction.random(n, rng)


# ---------------------------------------------------------------------------
# reveal paths


@dataclass(frozen=True)
class RevealPath:
    taus: tuple[float, ...]
    x: BitPoint

    @property
    def n(self) -> int:
        return self.x.n

    def S(self, t: float) -> list[int]:
        return [i for i, s in enumerate(self.taus) if s <= t]

    def X(self, t: float) -> PartialPoint:
        fixed = sum(1 << i for i in self.S(t))
        return PartialPoint(self.n, fixed, self.x.bits & fixed)

    @classmethod
    def sample(cls, n: int, rng: np.random.Generator) -> "RevealPath":
        taus = tuple(float(v) for v in rng.random(n))
        bits = int(bits_to_index((rng.random(n) < 0.5)[None, :])[0])
        return cls(taus, BitPoint(n, bits))


def couple_to_discrete(path: RevealPath) -> Path:
    """Discrete uniform process that reveals coordinates in order of tau."""
    pi = [int(i) for i in np.argsort(np.array(path.taus), kind="stable")]
    vals = [-1 if (path.x.bits >> i) & 1 else 1 for i in pi]
    return Path(path.n, pi, vals, [])


@dataclass(frozen=True)
class CouplingStats:
    n: int
    epsilon: float
    trials: int
    seed: int
    t_tilde: float
    p_short: float              # P[|S(t~)| < (1 - eps) n]
    p_short_se: float
    bound: float                # exp(-eps n / 8)
    within_bound: bool

    def as_dict(self):
        return asdict(self)


def _short_block(n, t_tilde, need, rng, size):
    k = (rng.random((size, n)) <= t_tilde).sum(axis=1)
    return int((k < need).sum())


def coupling_stats(n: int, epsilon: float, trials: int, seed: int, workers: int = 1) -> CouplingStats:
    t_tilde = 1 - epsilon / 2
    need = (1 - epsilon) * n
    hits = sum(map_blocks(partial(_short_block, n, t_tilde, need), trials, seed, workers=workers))
    p, se = proportion(hits, trials)
    b = math.exp(-epsilon * n / 8)
    return CouplingStats(n, epsilon, trials, seed, t_tilde, p, se, b, p <= b + 3 * se)


# ---------------------------------------------------------------------------
# beta tails


def _reveal_block(f, t, rng, size):
    """Run the continuous process up to time t, sampling beta at every reveal event."""
    n = f.n
    taus = rng.random((size, n))
    neg_all = rng.random((size, n)) < 0.5
    order = np.argsort(taus, axis=1)
    k_t = (taus <= t).sum(axis=1)
    rows = np.arange(size)
    fixed = np.zeros((size, n), dtype=bool)
    neg = np.zeros((size, n), dtype=bool)
    beta = np.zeros(size)
    beta_star = np.zeros(size)
    pointwise_ok = True
    for k in range(n + 1):
        active = k <= k_t
        if not active.any():
            break
        g = np.abs(f.grad_batch(fixed, neg))
        b = g.max(axis=1, initial=0.0)
        bs = np.where(~fixed, g, 0.0).max(axis=1, initial=0.0)
        pointwise_ok &= bool(np.all(bs <= b))
        beta = np.where(active, np.maximum(beta, b), beta)
        beta_star = np.where(active, np.maximum(beta_star, bs), beta_star)
        if k < n:
            i = order[:, k]
            fixed[rows, i] = True
            neg[rows, i] = neg_all[rows, i]
    return beta, beta_star, pointwise_ok


@dataclass(frozen=True)
class BetaTail:
    kind: str                   # "continuous" or "discrete"
    t: float | None
    epsilon: float | None
    theta: float
    trials: int
    seed: int
    max_influence: float        # spectral
    p_tail: float               # P[sup beta >= theta]
    p_tail_se: float
    p_tail_star: float          # same for beta*
    p_tail_star_se: float
    bound: float
    within_bound: bool
    precondition: bool
    sharper_bound: float | None
    beta_star_le_beta: bool

    def as_dict(self):
        return asdict(self)


def _spectral_minf(f: BooleanFunction) -> float:
    return float(np.max(f.influences_spectral(), initial=0.0))


def beta_tail(f: BooleanFunction, t: float, theta: float, trials: int, seed: int, workers: int = 1) -> BetaTail:
    """P[sup_{s<=t} beta(s) >= theta] against theta^-3 mINF^{(1-t)/8}."""
    if not 0 <= t < 1 or not 0 < theta < 1:
        raise ValueError("need 0 <= t < 1 and 0 < theta < 1")
    parts = map_blocks(partial(_reveal_block, f, t), trials, seed, workers=workers)
    beta = np.concatenate([p[0] for p in parts])
    bstar = np.concatenate([p[1] for p in parts])
    minf = _spectral_minf(f)
    p, se = proportion(int((beta >= theta).sum()), trials)
    ps, ses = proportion(int((bstar >= theta).sum()), trials)
    bound = theta ** -3 * minf ** ((1 - t) / 8)
    pre = 8 / (1 - t) * math.log(2 / (1 - t)) <= (math.log(1 / minf) if minf > 0 else math.inf)
    sharper = minf ** ((1 - t) / 40) if theta >= minf ** ((1 - t) / 30) else None
    return BetaTail("continuous", t, None, theta, trials, seed, minf, p, se, ps, ses, bound,
                    p <= bound + 3 * se, pre, sharper, all(q[2] for q in parts))


def _discrete_block(f, horizon, rng, size):
    b = simulate(f, "uniform", size, rng, track_grad=True)
    return (b.gmax[:, :horizon + 1].max(axis=1), b.gmax_alive[:, :horizon + 1].max(axis=1),
            bool(np.all(b.gmax_alive <= b.gmax)))


def discrete_beta_tail(f: BooleanFunction, epsilon: float, theta: float, trials: int, seed: int,
                       workers: int = 1) -> BetaTail:
    """Discrete clock: max over t <= (1-eps)n of max_i |d_i f(X(t))| against
    theta^-3 mINF^{eps/16} + exp(-eps n / 8)."""
    if not 0 < epsilon < 1 or not 0 < theta < 1:
        raise ValueError("need 0 < epsilon < 1 and 0 < theta < 1")
    horizon = int(math.floor((1 - epsilon) * f.n + 1e-9))
    parts = map_blocks(partial(_discrete_block, f, horizon), trials, seed, workers=workers)
    beta = np.concatenate([p[0] for p in parts])
    bstar = np.concatenate([p[1] for p in parts])
    minf = _spectral_minf(f)
    p, se = proportion(int((beta >= theta).sum()), trials)
    ps, ses = proportion(int((bstar >= theta).sum()), trials)
    bound = theta ** -3 * minf ** (epsilon / 16) + math.exp(-epsilon * f.n / 8)
    pre = 16 / epsilon * math.log(4 / epsilon) <= (math.log(1 / minf) if minf > 0 else math.inf)
    return BetaTail("discrete", None, epsilon, theta, trials, seed, minf, p, se, ps, ses, bound,
                    p <= bound + 3 * se, pre, None, all(q[2] for q in parts))


def _coupled_block(f, epsilon, theta, rng, size):
    """Discrete event over t <= (1-eps)n versus continuous event over s <= 1 - eps/2
    on the same reveal order; counts runs where the implication fails."""
    n = f.n
    taus = rng.random((size, n))
    neg_all = rng.random((size, n)) < 0.5
    order = np.argsort(taus, axis=1)
    k_cont = (taus <= 1 - epsilon / 2).sum(axis=1)
    horizon = int(math.floor((1 - epsilon) * n + 1e-9))
    rows = np.arange(size)
    fixed = np.zeros((size, n), dtype=bool)
    neg = np.zeros((size, n), dtype=bool)
    disc = np.zeros(size, dtype=bool)
    cont = np.zeros(size, dtype=bool)
    for k in range(n + 1):
        hit = np.abs(f.grad_batch(fixed, neg)).max(axis=1, initial=0.0) >= theta
        if k <= horizon:
            disc |= hit
        cont |= hit & (k <= k_cont)
        if k < n:
            i = order[:, k]
            fixed[rows, i] = True
            neg[rows, i] = neg_all[rows, i]
    long_enough = k_cont >= horizon
    return int((disc & ~cont & long_enough).sum()), int(disc.sum()), int(cont.sum()), int((~long_enough).sum())


def coupled_event_check(f: BooleanFunction, epsilon: float, theta: float, trials: int, seed: int) -> dict:
    parts = map_blocks(partial(_coupled_block, f, epsilon, theta), trials, seed)
    v, d, c, s = (sum(p[j] for p in parts) for j in range(4))
    return {"implication_failures": v, "p_discrete": d / trials, "p_continuous": c / trials,
            "p_short": s / trials, "bound_slack": c / trials + math.exp(-epsilon * f.n / 8) - d / trials}
