"""Sensitivity, block sensitivity, decision-tree depth and the OSSS check."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .core.functions import TERNARY_CAP, ArityError, BooleanFunction
from .core.points import BitPoint, PartialPoint, bits_to_index, index_to_bits
from .restriction import alive_count, sample_fixed_alive_batch
from .rng import map_blocks, proportion

BS_CAP = 14
PARTITION_BLOCK_CAP = 16


def _values(f: BooleanFunction, cap: int) -> np.ndarray:
    if f.n > cap:
        raise ArityError(f"n={f.n} exceeds the cap {cap}")
    return f.table().values


def _point_index(x, n: int) -> int:
    if isinstance(x, BitPoint):
        if x.n != n:
            raise ArityError(f"point has arity {x.n}, function has arity {n}")
        return x.bits
    x = int(x)
    if not 0 <= x < 1 << n:
        raise ValueError(f"index {x} outside the cube of dimension {n}")
    return x


# ---------------------------------------------------------------------------
# sensitivity


def sensitivity(f: BooleanFunction, x) -> int:
    """Number of coordinates whose flip changes f at x."""
    k = _point_index(x, f.n)
    bits = index_to_bits(np.array([k ^ (1 << i) for i in range(f.n)] + [k]), f.n)
    v = f.evaluate_bits(bits)
    return int((v[:-1] != v[-1]).sum())


def sensitivity_all(f: BooleanFunction) -> np.ndarray:
    v = _values(f, 24)
    idx = np.arange(v.size)
    return sum((v != v[idx ^ (1 << i)]).astype(np.int64) for i in range(f.n)) if f.n else np.zeros(1, np.int64)


def average_sensitivity(f: BooleanFunction) -> float:
    return float(np.sum(f.influences_flip()))


def kkl_diagnostic(f: BooleanFunction) -> dict:
    """Average sensitivity against Var[f] ln(1/mINF) (flip influence); report only."""
    infl = f.influences_flip()
    minf = float(infl.max(initial=0.0))
    var = f.variance
    denom = var * math.log(1 / minf) if 0 < minf < 1 else math.nan
    avg = float(infl.sum())
    return {"average_sensitivity": avg, "variance": var, "max_influence_flip": minf,
            "ratio": avg / denom if denom and denom == denom else math.nan}


# ---------------------------------------------------------------------------
# block sensitivity


@dataclass(frozen=True)
class BlockCertificate:
    x: BitPoint
    blocks: tuple[int, ...]   # disjoint bit masks

    def verify(self, f: BooleanFunction) -> bool:
        seen = 0
        fx = f(self.x)
        for b in self.blocks:
            if b == 0 or b & seen:
                return False
            seen |= b
            if f(self.x.flip(b)) == fx:
                return False
        return True

    def block_sets(self) -> list[list[int]]:
        return [[i for i in range(self.x.n) if (b >> i) & 1] for b in self.blocks]


def minimal_sensitive_blocks(values: np.ndarray, n: int, x: int) -> np.ndarray:
    """Masks B such that flipping B changes f at x while no proper nonempty subset does."""
    size = 1 << n
    idx = np.arange(size)
    sens = values[idx ^ x] != values[x]
    sens[0] = False
    # down[B] = some nonempty subset of B is sensitive
    down = sens.copy()
    for i in range(n):
        v = down.reshape(-1, 2, 1 << i)
        v[:, 1, :] |= v[:, 0, :]
    below = np.zeros(size, dtype=bool)
    for i in range(n):
        has = ((idx >> i) & 1).astype(bool)
        below[has] |= down[idx[has] ^ (1 << i)]
    return idx[sens & ~below]


def _max_packing(blocks: list[int], universe: int) -> list[int]:
    """Largest family of pairwise disjoint masks, by branch and bound."""
    if not blocks:
        return []
    minsize = min(bin(b).count("1") for b in blocks)
    by_elem: dict[int, list[int]] = {}
    for b in sorted(blocks, key=lambda b: bin(b).count("1")):
        low = b & -b
        by_elem.setdefault(low, []).append(b)

    # greedy lower bound: smallest blocks first
    best: list[int] = []
    used = 0
    for b in sorted(blocks, key=lambda b: bin(b).count("1")):
        if not b & used:
            best.append(b)
            used |= b
    best = list(best)

    def rec(avail: int, chosen: list[int]):
        nonlocal best
        if len(chosen) + bin(avail).count("1") // minsize <= len(best):
            return
        if avail == 0:
            if len(chosen) > len(best):
                best = list(chosen)
            return
        low = avail & -avail
        # blocks whose lowest element is low and that fit in avail
        for b in by_elem.get(low, ()):
            if b & ~avail == 0:
                chosen.append(b)
                rec(avail & ~b, chosen)
                chosen.pop()
        rec(avail & ~low, chosen)

    usable = 0
    for b in blocks:
        usable |= b
    rec(universe & usable, [])
    return best


def bs_exact(f: BooleanFunction, x) -> tuple[int, BlockCertificate]:
    """Block sensitivity of f at x with a certificate of disjoint sensitive blocks."""
    v = _values(f, BS_CAP)
    k = _point_index(x, f.n)
    blocks = [int(b) for b in minimal_sensitive_blocks(v, f.n, k)]
    packing = _max_packing(blocks, (1 << f.n) - 1)
    cert = BlockCertificate(BitPoint(f.n, k), tuple(sorted(packing)))
    return len(packing), cert


def bs_all(f: BooleanFunction) -> np.ndarray:
    return np.array([bs_exact(f, k)[0] for k in range(1 << f.n)])


def equipartition(perm: np.ndarray, M: int) -> list[np.ndarray]:
    """Split a permutation into M blocks; the first n mod M blocks get one extra index."""
    n = perm.shape[-1]
    if not 1 <= M <= n:
        raise ValueError(f"M={M} must lie in [1, n={n}]")
    q, r = divmod(n, M)
    out, start = [], 0
    for j in range(M):
        size = q + (1 if j < r else 0)
        out.append(perm[..., start:start + size])
        start += size
    return out


def _partition_block(f, M, rng, size):
    n = f.n
    x = rng.random((size, n)) < 0.5
    perm = np.argsort(rng.random((size, n)), axis=1)
    fx = f.evaluate_bits(x).astype(bool)
    sens = np.zeros((size, M), dtype=bool)
    rows = np.arange(size)[:, None]
    for j, blk in enumerate(equipartition(perm, M)):
        s = blk.shape[1]
        masks = np.arange(1, 1 << s)
        pattern = ((masks[:, None] >> np.arange(s)) & 1).astype(bool)  # (2^s-1, s)
        flips = np.zeros((size, masks.size, n), dtype=bool)
        cols = np.arange(masks.size)[None, :]
        for c in range(s):
            flips[rows, cols, blk[:, c:c + 1]] = pattern[None, :, c]
        y = (x[:, None, :] ^ flips).reshape(-1, n)
        fy = f.evaluate_bits(y).astype(bool).reshape(size, -1)
        sens[:, j] = (fy != fx[:, None]).any(axis=1)
    return sens, x


@dataclass
class PartitionEstimate:
    M: int
    trials: int
    seed: int
    count_hist: list[int]
    mean_count: float
    p_low: float                # P[count < M/2]
    p_low_se: float
    p_constant: float           # P[f|R constant] over (trial, block)
    p_constant_se: float
    double_count_holds: bool    # p_low / 2 <= p_constant + 3 se
    counts: np.ndarray = field(repr=False, default=None)
    x_indices: np.ndarray = field(repr=False, default=None)

    def as_dict(self):
        d = asdict(self)
        d.pop("counts")
        d.pop("x_indices")
        return d


def bs_partition_estimate(f: BooleanFunction, M: int, trials: int, seed: int, workers: int = 1) -> PartitionEstimate:
    """Random-partition lower bound on bs_f(x): blocks S_1..S_M of a random
    equipartition, block j counted when some subset of S_j flips f at x."""
    if math.ceil(f.n / M) > PARTITION_BLOCK_CAP:
        raise ValueError(f"block size {math.ceil(f.n / M)} exceeds the enumeration cap {PARTITION_BLOCK_CAP}")
    parts = map_blocks(partial(_partition_block, f, M), trials, seed, workers=workers)
    sens = np.concatenate([p[0] for p in parts])
    xs = np.concatenate([p[1] for p in parts])
    counts = sens.sum(axis=1)
    p_low, se_low = proportion(int((counts < M / 2).sum()), trials)
    insens = int((~sens).sum())
    pc, sec = proportion(insens, trials * M)
    # (trial, block) indicators are not independent; the trial-level SE is the honest one
    per_trial = (~sens).mean(axis=1)
    sec = max(sec, float(per_trial.std(ddof=0) / math.sqrt(trials)))
    return PartitionEstimate(
        M=M, trials=trials, seed=seed,
        count_hist=np.bincount(counts, minlength=M + 1).tolist(),
        mean_count=float(counts.mean()), p_low=p_low, p_low_se=se_low,
        p_constant=pc, p_constant_se=sec, double_count_holds=p_low / 2 <= pc + 3 * sec,
        counts=counts, x_indices=bits_to_index(xs) if f.n <= 62 else None,
    )


# ---------------------------------------------------------------------------
# decision trees


def _ternary_counts(values: np.ndarray, n: int) -> np.ndarray:
    """Number of ones in each subcube, for a batch of tables (F, 2^n) -> (F, 3^n)."""
    F = values.shape[0]
    arr = values.astype(np.int64).reshape((F,) + (2,) * n)
    for axis in range(1, n + 1):
        a = np.take(arr, 0, axis=axis)
        b = np.take(arr, 1, axis=axis)
        arr = np.stack([a + b, a, b], axis=axis)
    return arr.reshape(F, -1)


def _alive_counts(n: int) -> np.ndarray:
    s = np.arange(3 ** n)
    digits = (s[:, None] // 3 ** np.arange(n)) % 3
    return (digits == 0).sum(axis=1), digits


def dt_from_counts(counts: np.ndarray, n: int) -> np.ndarray:
    """Decision-tree depth at every subcube, for a batch (F, 3^n) of ones-counts."""
    n_alive, digits = _alive_counts(n)
    size = np.left_shift(1, n_alive)
    const = (counts == 0) | (counts == size[None, :])
    F = counts.shape[0]
    dt = np.zeros((F, 3 ** n), dtype=np.int16)
    pw = 3 ** np.arange(n)
    for c in range(1, n + 1):
        states = np.nonzero(n_alive == c)[0]
        best = np.full((F, states.size), np.iinfo(np.int16).max, dtype=np.int16)
        for i in range(n):
            alive_i = digits[states, i] == 0
            st = states[alive_i]
            if st.size == 0:
                continue
            worst = np.maximum(dt[:, st + pw[i]], dt[:, st + 2 * pw[i]])
            best[:, alive_i] = np.minimum(best[:, alive_i], worst)
        dt[:, states] = np.where(const[:, states], 0, best + 1)
    return dt


def dt_exact(f: BooleanFunction) -> int:
    """Deterministic decision-tree depth, by dynamic programming over subcubes."""
    if f.n > TERNARY_CAP:
        raise ArityError(f"n={f.n} exceeds the cap {TERNARY_CAP}")
    v = f.table().values
    counts = _ternary_counts(v[None, :], f.n)
    return int(dt_from_counts(counts, f.n)[0, 0])


def dt_naive_batch(values: np.ndarray) -> np.ndarray:
    """Plain recursion on sub-tables (no memo), vectorised over a batch of tables."""
    F, size = values.shape
    k = size.bit_length() - 1
    s = values.sum(axis=1)
    const = (s == 0) | (s == size)
    if k == 0:
        return np.zeros(F, dtype=np.int16)
    best = np.full(F, k + 1, dtype=np.int16)
    for i in range(k):
        v = values.reshape(F, -1, 2, 1 << i)
        lo = v[:, :, 0, :].reshape(F, -1)
        hi = v[:, :, 1, :].reshape(F, -1)
        best = np.minimum(best, np.maximum(dt_naive_batch(lo), dt_naive_batch(hi)))
    return np.where(const, 0, best + 1).astype(np.int16)


def dt_naive(f: BooleanFunction) -> int:
    return int(dt_naive_batch(f.table().values[None, :].astype(np.int64))[0])


def all_tables(n: int) -> np.ndarray:
    """All 2^(2^n) truth tables as rows (n <= 4)."""
    if n > 4:
        raise ArityError("exhaustive sweep limited to n <= 4")
    F = 1 << (1 << n)
    codes = np.arange(F, dtype=np.int64)
    return ((codes[:, None] >> np.arange(1 << n)) & 1).astype(np.uint8)


def flip_counts_batch(values: np.ndarray, n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return np.stack([(values != values[:, idx ^ (1 << i)]).sum(axis=1) for i in range(n)], axis=1)


@dataclass(frozen=True)
class OSSSResult:
    influence: str
    max_influence: float
    dt: int
    lhs: float
    rhs: float
    holds: bool

    def as_dict(self):
        return asdict(self)


def osss_check(f: BooleanFunction, influence: str = "flip") -> OSSSResult:
    """mINF(f) * DT(f) against Var[f]."""
    if influence not in ("flip", "spectral"):
        raise ValueError("influence must be 'flip' or 'spectral'")
    infl = f.influences_flip() if influence == "flip" else f.influences_spectral()
    minf = float(np.max(infl, initial=0.0))
    d = dt_exact(f)
    lhs, rhs = minf * d, f.variance
    return OSSSResult(influence, minf, d, lhs, rhs, lhs >= rhs - 1e-12)


@dataclass(frozen=True)
class SweepResult:
    n: int
    functions: int
    dt_hist: list[int]
    dt_memo_equals_naive: bool
    osss_flip_violations: int
    osss_spectral_violations: int

    def as_dict(self):
        return asdict(self)


def osss_sweep(n: int = 4) -> SweepResult:
    """Exhaustive DT and OSSS check over every function of n variables (exact integer arithmetic)."""
    tables = all_tables(n)
    dt = dt_from_counts(_ternary_counts(tables, n), n)[:, 0].astype(np.int64)
    naive = dt_naive_batch(tables.astype(np.int64)).astype(np.int64)
    N = 1 << n
    ones = tables.sum(axis=1).astype(np.int64)
    cnt = flip_counts_batch(tables, n).max(axis=1).astype(np.int64)
    var_num = ones * (N - ones)  # Var * N^2
    lhs = cnt * dt * N           # mINF_flip * DT * N^2; spectral side is a quarter of it
    return SweepResult(
        n=n, functions=tables.shape[0], dt_hist=np.bincount(dt, minlength=n + 1).tolist(),
        dt_memo_equals_naive=bool(np.array_equal(dt, naive)),
        osss_flip_violations=int((lhs < var_num).sum()),
        osss_spectral_violations=int((lhs < 4 * var_num).sum()),
    )


# ---------------------------------------------------------------------------
# monotone functions under restriction


@dataclass(frozen=True)
class MonotoneInfluenceTail:
    rho: float
    k_alive: int
    trials: int
    seed: int
    max_influence: float        # spectral mINF(f)
    threshold: float            # mINF^(rho/30)
    p_tail: float               # P[beta* >= threshold]
    p_tail_se: float
    bound: float                # mINF^(rho/40) + exp(-rho n / 8)
    within_bound: bool
    beta_star_mean: float
    monotone_checked: bool      # False when monotonicity is assumed for a closed form

    def as_dict(self):
        return asdict(self)


def _mono_block(f, k, thr, rng, size):
    fixed, neg = sample_fixed_alive_batch(f.n, k, size, rng)
    g = np.abs(f.grad_batch(fixed, neg))
    beta = np.where(~fixed, g, 0.0).max(axis=1, initial=0.0)
    return int((beta >= thr).sum()), float(beta.sum())


def restricted_influences_exact(f: BooleanFunction, fixed: int, signs: int) -> dict:
    """Alive |d_i f| at the restriction together with exact flip and spectral
    influences of the materialised restricted function (small n)."""
    x = PartialPoint(f.n, fixed, signs)
    grad = f.gradient(x)
    g = f.restrict(fixed, signs)
    alive = x.alive()
    flip = g.influences_flip() if alive else np.zeros(0)
    return {"alive": alive, "abs_derivative": [abs(grad[i]) for i in alive],
            "flip": [float(v) for v in flip], "spectral": [float(v) / 4 for v in flip]}


def monotone_restricted_influence(f: BooleanFunction, rho: float, trials: int, seed: int,
                                  workers: int = 1) -> MonotoneInfluenceTail:
    """Tail of beta* = max alive |d_i f| at a fixed-size restriction keeping ceil(rho n) alive.

    For monotone f the alive derivative is half the restricted flip influence
    and twice the restricted spectral influence; beta* is what is thresholded.
    """
    # closed forms that override is_monotone assert it by construction
    checked = "is_monotone" not in vars(type(f))
    if not f.is_monotone():
        raise ValueError("f is not monotone")
    minf = float(np.max(f.influences_spectral(), initial=0.0))
    k = alive_count(rho, f.n)
    thr = minf ** (rho / 30)
    parts = map_blocks(partial(_mono_block, f, k, thr), trials, seed, workers=workers)
    hits = sum(p[0] for p in parts)
    p, se = proportion(hits, trials)
    bound = minf ** (rho / 40) + math.exp(-rho * f.n / 8)
    return MonotoneInfluenceTail(
        rho=rho, k_alive=k, trials=trials, seed=seed, max_influence=minf, threshold=thr,
        p_tail=p, p_tail_se=se, bound=bound, within_bound=p <= bound + 3 * se,
        beta_star_mean=sum(p[1] for p in parts) / trials, monotone_checked=checked,
    )
