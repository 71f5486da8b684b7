"""Boolean functions and their multilinear extensions.

Every function works on batches of partial points given as two boolean
(R, n) arrays: ``fixed`` (coordinate determined) and ``neg`` (its value is -1).
The value of the extension at a partial point is the average of ``f`` over
all completions of the alive coordinates, and ``grad_batch`` returns the
multilinear partial derivatives ``(f(x, i->+1) - f(x, i->-1)) / 2`` for every
coordinate, fixed or not.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .points import BitPoint, PartialPoint, bits_to_index, index_to_bits

TABLE_CAP = 24
TERNARY_CAP = 12


class ArityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TruthTable:
    """Values of f on all 2^n points; entry k is f at the BitPoint with bits k."""

    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 0 <= self.n <= TABLE_CAP:
            raise ArityError(f"truth tables support n <= {TABLE_CAP}, got {self.n}")
        v = np.ascontiguousarray(self.values, dtype=np.uint8)
        if v.shape != (1 << self.n,):
            raise ValueError(f"expected {1 << self.n} entries, got {v.shape}")
        if v.max(initial=0) > 1:
            raise ValueError("truth table entries must be 0 or 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def ones_count(self) -> int:
        return int(self.values.sum(dtype=np.int64))

    @property
    def mean(self) -> Fraction:
        return Fraction(self.ones_count, 1 << self.n)

    def __eq__(self, other):
        return isinstance(other, TruthTable) and self.n == other.n and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.n, self.values.tobytes()))


def ternary_table(values: np.ndarray, n: int) -> np.ndarray:
    """Multilinear extension at every point of {-1,0,1}^n.

    Flat index is sum_i d_i 3^i with digit 0 = alive, 1 = +1, 2 = -1.
    """
    arr = np.asarray(values, dtype=np.float64).reshape([2] * n) if n else np.asarray(values, dtype=np.float64)
    for axis in range(n):
        a = np.take(arr, 0, axis=axis)
        b = np.take(arr, 1, axis=axis)
        arr = np.stack([(a + b) / 2, a, b], axis=axis)
    return arr.ravel()


def ternary_index(fixed: np.ndarray, neg: np.ndarray) -> np.ndarray:
    n = fixed.shape[1]
    w = 3 ** np.arange(n, dtype=np.int64)
    digits = fixed.astype(np.int64) * (1 + neg.astype(np.int64))
    return digits @ w


class BooleanFunction:
    """Base class: a {0,1}-valued function on {-1,1}^n with exact extension queries."""

    n: int
    name: str = "f"

    # --- batch kernels -------------------------------------------------
    def evaluate_bits(self, bits: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def mean_batch(self, fixed: np.ndarray, neg: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_batch(self, fixed: np.ndarray, neg: np.ndarray) -> np.ndarray:
        out = np.empty(fixed.shape, dtype=np.float64)
        for i in range(self.n):
            f2 = fixed.copy()
            f2[:, i] = True
            n2 = neg.copy()
            n2[:, i] = False
            plus = self.mean_batch(f2, n2)
            n2[:, i] = True
            minus = self.mean_batch(f2, n2)
            out[:, i] = (plus - minus) / 2
        return out

    def constant_batch(self, fixed: np.ndarray, neg: np.ndarray) -> np.ndarray:
        m = self.mean_batch(fixed, neg)
        return (m == 0.0) | (m == 1.0)

    def mean_exact(self, x: PartialPoint) -> Fraction:
        """Exact conditional mean by counting over the free subcube."""
        self._check_point(x)
        alive = x.alive()
        if len(alive) > TABLE_CAP:
            raise ArityError("too many alive coordinates for exact counting")
        comp = np.arange(1 << len(alive), dtype=np.int64)
        bits = np.zeros((comp.size, self.n), dtype=bool)
        base = index_to_bits(np.array([x.signs]), self.n)[0]
        bits[:] = base
        for j, i in enumerate(alive):
            bits[:, i] = (comp >> j) & 1
        count = int(self.evaluate_bits(bits).sum(dtype=np.int64))
        return Fraction(count, 1 << len(alive))

    # --- scalar API ----------------------------------------------------
    def _check_point(self, x):
        if x.n != self.n:
            raise ArityError(f"point has arity {x.n}, function has arity {self.n}")

    def __call__(self, x: BitPoint) -> int:
        self._check_point(x)
        return int(self.evaluate_bits(x.as_array()[None, :])[0])

    def cond_mean(self, x: PartialPoint) -> float:
        self._check_point(x)
        return float(self.mean_batch(*x.arrays())[0])

    def partial_derivative(self, i: int, x: PartialPoint) -> float:
        """Multilinear derivative in coordinate i; defined whether or not i is alive."""
        self._check_point(x)
        plus = self.cond_mean(x.set(i, 1))
        minus = self.cond_mean(x.set(i, -1))
        return (plus - minus) / 2

    def cond_derivative(self, i: int, x: PartialPoint) -> float:
        if not x.is_alive(i):
            raise ValueError(f"coordinate {i} is fixed at this point")
        return self.partial_derivative(i, x)

    def gradient(self, x: PartialPoint) -> dict[int, float]:
        """Derivatives at the alive coordinates only."""
        self._check_point(x)
        g = self.grad_batch(*x.arrays())[0]
        return {i: float(g[i]) for i in x.alive()}

    def is_constant(self, x: PartialPoint | None = None) -> bool:
        x = x or PartialPoint.alive_point(self.n)
        self._check_point(x)
        return bool(self.constant_batch(*x.arrays())[0])

    @property
    def mean(self) -> float:
        return self.cond_mean(PartialPoint.alive_point(self.n))

    @property
    def variance(self) -> float:
        m = self.mean
        return m * (1 - m)

    def table(self) -> TruthTable:
        if self.n > TABLE_CAP:
            raise ArityError(f"cannot materialise a table with n={self.n} > {TABLE_CAP}")
        bits = index_to_bits(np.arange(1 << self.n, dtype=np.int64), self.n)
        return TruthTable(self.n, self.evaluate_bits(bits))

    def influences_flip(self) -> np.ndarray:
        """P[f(x) != f(x with coordinate i flipped)] for each i."""
        return influences_flip_table(self.table())

    def influences_spectral(self) -> np.ndarray:
        # exact for {0,1}-valued functions: E[(d_i f)^2] = P[flip]/4
        return self.influences_flip() / 4

    def restrict(self, fixed: int, signs: int) -> "BooleanFunction":
        return Restricted(self, fixed, signs)

    def complement(self) -> "BooleanFunction":
        return Complement(self)

    def is_monotone(self) -> bool:
        return is_monotone_table(self.table())

    def __repr__(self):
        return f"<{self.name} n={self.n}>"


def influences_flip_table(t: TruthTable) -> np.ndarray:
    v = t.values
    k = np.arange(v.size)
    return np.array([np.count_nonzero(v != v[k ^ (1 << i)]) / v.size for i in range(t.n)])


def influence_flip_counts(t: TruthTable) -> list[int]:
    """Number of inputs k with f(k) != f(k ^ e_i), as exact integers."""
    v = t.values
    k = np.arange(v.size)
    return [int(np.count_nonzero(v != v[k ^ (1 << i)])) for i in range(t.n)]


def is_monotone_table(t: TruthTable) -> bool:
    """Setting any coordinate from +1 to -1 (bit 0 -> 1) never decreases f."""
    v = t.values
    k = np.arange(v.size)
    for i in range(t.n):
        low = k[(k >> i) & 1 == 0]
        if np.any(v[low] > v[low | (1 << i)]):
            return False
    return True


class TableFunction(BooleanFunction):
    """Function backed by a truth table; exact extension via a 3^n table when n is small."""

    name = "table"

    def __init__(self, table: TruthTable, name: str = "table"):
        self.truth = table
        self.n = table.n
        self.name = name
        self._tern = None

    @property
    def ternary(self) -> np.ndarray:
        if self._tern is None:
            if self.n > TERNARY_CAP:
                raise ArityError(f"3^n extension table capped at n={TERNARY_CAP}")
            self._tern = ternary_table(self.truth.values, self.n)
        return self._tern

    def evaluate_bits(self, bits):
        return self.truth.values[bits_to_index(np.atleast_2d(bits))]

    def mean_batch(self, fixed, neg):
        if self.n <= TERNARY_CAP:
            return self.ternary[ternary_index(fixed, neg)]
        rows = [self.mean_exact(PartialPoint(self.n, *_row_masks(f, s))) for f, s in zip(fixed, neg)]
        return np.array([float(r) for r in rows])

    def grad_batch(self, fixed, neg):
        if self.n > TERNARY_CAP:
            return super().grad_batch(fixed, neg)
        w = 3 ** np.arange(self.n, dtype=np.int64)
        digits = fixed.astype(np.int64) * (1 + neg.astype(np.int64))
        idx = digits @ w
        base = idx[:, None] - digits * w
        t = self.ternary
        return (t[base + w] - t[base + 2 * w]) / 2

    def mean_exact(self, x):
        self._check_point(x)
        alive = x.alive()
        comp = np.arange(1 << len(alive), dtype=np.int64)
        idx = np.full(comp.size, x.signs, dtype=np.int64)
        for j, i in enumerate(alive):
            idx |= ((comp >> j) & 1) << i
        return Fraction(int(self.truth.values[idx].sum(dtype=np.int64)), 1 << len(alive))

    def table(self):
        return self.truth

    def influences_flip(self):
        return influences_flip_table(self.truth)

    def restrict(self, fixed, signs):
        # materialise on the alive coordinates in ascending original order
        r = Restricted(self, fixed, signs)
        return TableFunction(r.table(), name=f"{self.name}|R")


def _row_masks(frow, srow):
    f = s = 0
    for i, (a, b) in enumerate(zip(frow, srow)):
        if a:
            f |= 1 << i
            if b:
                s |= 1 << i
    return f, s


def _prod_excluding(factors: np.ndarray) -> np.ndarray:
    """For each position along the last axis, the product of all other entries."""
    ones = np.ones(factors.shape[:-1] + (1,))
    left = np.cumprod(np.concatenate([ones, factors[..., :-1]], axis=-1), axis=-1)
    right = np.cumprod(np.concatenate([ones, factors[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return left * right


class Tribes(BooleanFunction):
    """AND of n/w disjoint ORs of width w (clause j holds coordinates jw..jw+w-1)."""

    def __init__(self, w: int, n: int | None = None):
        if w < 1:
            raise ValueError("tribes width must be >= 1")
        if n is None:
            n = tribes_size(w)
        if n % w:
            raise ValueError(f"n={n} is not a multiple of w={w}")
        self.w, self.n = w, n
        self.clauses = n // w
        self.name = f"tribes(w={w},n={n})"

    def _state(self, fixed, neg):
        shape = (fixed.shape[0], self.clauses, self.w)
        f = fixed.reshape(shape)
        true = (f & neg.reshape(shape))
        return f, true

    def evaluate_bits(self, bits):
        b = np.atleast_2d(bits).reshape(-1, self.clauses, self.w)
        return b.any(axis=2).all(axis=1).astype(np.uint8)

    def mean_batch(self, fixed, neg):
        f, true = self._state(fixed, neg)
        has_true = true.any(axis=2)
        alive = (~f).sum(axis=2)
        g = np.where(has_true, 1.0, 1.0 - np.ldexp(1.0, -alive))
        return g.prod(axis=1)

    def grad_batch(self, fixed, neg):
        f, true = self._state(fixed, neg)
        n_true = true.sum(axis=2)
        alive = (~f).sum(axis=2)
        g = np.where(n_true > 0, 1.0, 1.0 - np.ldexp(1.0, -alive))
        others = _prod_excluding(g)  # (R, clauses)
        # value of the clause with coordinate i forced to +1 (false)
        other_true = (n_true[:, :, None] - true) > 0
        alive_excl = alive[:, :, None] - (~f)
        g_plus = np.where(other_true, 1.0, 1.0 - np.ldexp(1.0, -alive_excl))
        d = others[:, :, None] * (g_plus - 1.0) / 2
        return d.reshape(fixed.shape)

    def constant_batch(self, fixed, neg):
        f, true = self._state(fixed, neg)
        has_true = true.any(axis=2)
        dead = ~has_true & f.all(axis=2)
        return has_true.all(axis=1) | dead.any(axis=1)

    def mean_exact(self, x):
        self._check_point(x)
        out = Fraction(1)
        for c in range(self.clauses):
            alive = 0
            sat = False
            for i in range(c * self.w, (c + 1) * self.w):
                if not (x.fixed >> i) & 1:
                    alive += 1
                elif (x.signs >> i) & 1:
                    sat = True
            if not sat:
                out *= 1 - Fraction(1, 1 << alive)
        return out

    def influences_flip(self):
        v = 2.0 ** -(self.w - 1) * (1 - 2.0 ** -self.w) ** (self.clauses - 1)
        return np.full(self.n, v)

    def is_monotone(self):
        return True


def tribes_size(w: int) -> int:
    """Smallest multiple n of w with (1 - 2^-w)^(n/w) <= 1/2."""
    q = 1 - Fraction(1, 1 << w)
    c, p = 1, q
    while p > Fraction(1, 2):
        c += 1
        p *= q
    return c * w


@lru_cache(maxsize=None)
def _majority_tables(n: int):
    """Exact counts and means of MAJ at (partial sum s, alive count a)."""
    counts = {}
    means = np.zeros((2 * n + 3, n + 1))
    for a in range(n + 1):
        row = [math.comb(a, k) for k in range(a + 1)]
        tail = [0] * (a + 2)
        for k in range(a, -1, -1):
            tail[k] = tail[k + 1] + row[k]
        for s in range(-n - 1, n + 2):
            # f = 1 iff s + (a - 2k) <= 0, k = number of alive set to -1
            kmin = max(0, -(-(s + a) // 2))
            c = tail[kmin] if kmin <= a else 0
            counts[(s, a)] = c
            means[s + n + 1, a] = c / (1 << a)
    return counts, means


class Majority(BooleanFunction):
    """MAJ_n: 0 if sum x_i > 0 and 1 otherwise (ties go to 1)."""

    def __init__(self, n: int, allow_even: bool = False):
        if n < 1:
            raise ValueError("majority needs n >= 1")
        if n % 2 == 0 and not allow_even:
            raise ValueError(f"majority with even n={n} is rejected unless allow_even is set")
        self.n = n
        self.name = f"maj(n={n})"
        self._counts, self._means = _majority_tables(n)

    def _sums(self, fixed, neg):
        x = np.where(fixed, np.where(neg, -1, 1), 0)
        return x, x.sum(axis=1), (~fixed).sum(axis=1)

    def evaluate_bits(self, bits):
        b = np.atleast_2d(bits)
        s = self.n - 2 * b.sum(axis=1)
        return (s <= 0).astype(np.uint8)

    def mean_batch(self, fixed, neg):
        _, s, a = self._sums(fixed, neg)
        return self._means[s + self.n + 1, a]

    def grad_batch(self, fixed, neg):
        x, s, a = self._sums(fixed, neg)
        s_ex = s[:, None] - x
        a_ex = a[:, None] - (~fixed)
        o = self.n + 1
        return (self._means[s_ex + 1 + o, a_ex] - self._means[s_ex - 1 + o, a_ex]) / 2

    def constant_batch(self, fixed, neg):
        _, s, a = self._sums(fixed, neg)
        return (s + a <= 0) | (s - a > 0)

    def mean_exact(self, x):
        self._check_point(x)
        t = x.ternary()
        s = sum(t)
        a = t.count(0)
        return Fraction(self._counts[(s, a)], 1 << a)

    def influences_flip(self):
        # flipping i matters iff the other n-1 coordinates sum to 0 or 1
        m = self.n - 1
        c = sum(math.comb(m, k) for k in range(m + 1) if m - 2 * k in (0, 1))
        return np.full(self.n, c / 2.0 ** m)

    def is_monotone(self):
        return True


class Parity(BooleanFunction):
    """XOR of all bits, i.e. (1 - chi_[n]) / 2."""

    def __init__(self, n: int):
        self.n = n
        self.name = f"parity(n={n})"

    def evaluate_bits(self, bits):
        return (np.atleast_2d(bits).sum(axis=1) % 2).astype(np.uint8)

    def mean_batch(self, fixed, neg):
        any_alive = (~fixed).any(axis=1)
        return np.where(any_alive, 0.5, (neg & fixed).sum(axis=1) % 2).astype(np.float64)

    def grad_batch(self, fixed, neg):
        alive = (~fixed).sum(axis=1)
        alive_other = alive[:, None] - (~fixed)
        nneg = (neg & fixed).sum(axis=1)
        chi_other = np.where((nneg[:, None] - (neg & fixed)) % 2 == 1, -1.0, 1.0)
        return np.where(alive_other == 0, -0.5 * chi_other, 0.0)

    def constant_batch(self, fixed, neg):
        return fixed.all(axis=1)

    def influences_flip(self):
        return np.ones(self.n)

    def is_monotone(self):
        return self.n == 0


class _ProductFamily(BooleanFunction):
    # f = sign_const + sign * prod_i factor_i
    def _factors(self, fixed, neg):
        raise NotImplementedError

    def mean_batch(self, fixed, neg):
        return self._c + self._s * self._factors(fixed, neg).prod(axis=1)

    def grad_batch(self, fixed, neg):
        return -0.5 * _prod_excluding(self._factors(fixed, neg))

    def influences_flip(self):
        return np.full(self.n, 2.0 ** -(self.n - 1))

    def is_monotone(self):
        return True


class And(_ProductFamily):
    """1 iff every x_i = -1."""

    _c, _s = 0.0, 1.0

    def __init__(self, n: int):
        self.n = n
        self.name = f"and(n={n})"

    def evaluate_bits(self, bits):
        return np.atleast_2d(bits).all(axis=1).astype(np.uint8)

    def _factors(self, fixed, neg):
        return np.where(fixed, np.where(neg, 1.0, 0.0), 0.5)

    def constant_batch(self, fixed, neg):
        return (fixed & ~neg).any(axis=1) | fixed.all(axis=1)


class Or(_ProductFamily):
    """0 iff every x_i = +1."""

    _c, _s = 1.0, -1.0

    def __init__(self, n: int):
        self.n = n
        self.name = f"or(n={n})"

    def evaluate_bits(self, bits):
        return np.atleast_2d(bits).any(axis=1).astype(np.uint8)

    def _factors(self, fixed, neg):
        return np.where(fixed, np.where(neg, 0.0, 1.0), 0.5)

    def constant_batch(self, fixed, neg):
        return (fixed & neg).any(axis=1) | fixed.all(axis=1)


class Dictator(BooleanFunction):
    """(1 - x_i) / 2: equals bit i."""

    def __init__(self, n: int, i: int = 0):
        if not 0 <= i < n:
            raise ValueError(f"dictator index {i} out of range for n={n}")
        self.n, self.i = n, i
        self.name = f"dictator(n={n},i={i})"

    def evaluate_bits(self, bits):
        return np.atleast_2d(bits)[:, self.i].astype(np.uint8)

    def mean_batch(self, fixed, neg):
        return np.where(fixed[:, self.i], neg[:, self.i].astype(np.float64), 0.5)

    def grad_batch(self, fixed, neg):
        out = np.zeros(fixed.shape)
        out[:, self.i] = -0.5
        return out

    def constant_batch(self, fixed, neg):
        return fixed[:, self.i].copy()

    def influences_flip(self):
        out = np.zeros(self.n)
        out[self.i] = 1.0
        return out

    def is_monotone(self):
        return True


class Constant(BooleanFunction):
    def __init__(self, n: int, value: int = 1):
        if value not in (0, 1):
            raise ValueError("constant value must be 0 or 1")
        self.n, self.value = n, value
        self.name = f"const(n={n},value={value})"

    def evaluate_bits(self, bits):
        return np.full(np.atleast_2d(bits).shape[0], self.value, dtype=np.uint8)

    def mean_batch(self, fixed, neg):
        return np.full(fixed.shape[0], float(self.value))

    def grad_batch(self, fixed, neg):
        return np.zeros(fixed.shape)

    def constant_batch(self, fixed, neg):
        return np.ones(fixed.shape[0], dtype=bool)

    def influences_flip(self):
        return np.zeros(self.n)

    def is_monotone(self):
        return True


class Complement(BooleanFunction):
    """1 - f."""

    def __init__(self, base: BooleanFunction):
        self.base = base
        self.n = base.n
        self.name = f"not {base.name}"

    def evaluate_bits(self, bits):
        return (1 - self.base.evaluate_bits(bits)).astype(np.uint8)

    def mean_batch(self, fixed, neg):
        return 1.0 - self.base.mean_batch(fixed, neg)

    def grad_batch(self, fixed, neg):
        return -self.base.grad_batch(fixed, neg)

    def constant_batch(self, fixed, neg):
        return self.base.constant_batch(fixed, neg)

    def mean_exact(self, x):
        return 1 - self.base.mean_exact(x)

    def influences_flip(self):
        return self.base.influences_flip()


class Restricted(BooleanFunction):
    """f with the coordinates in ``fixed`` set by ``signs``; the remaining
    coordinates are re-indexed 0..k-1 in ascending original order."""

    def __init__(self, parent: BooleanFunction, fixed: int, signs: int):
        self.parent = parent
        self.point = PartialPoint(parent.n, fixed, signs)
        self.alive_index = np.array(self.point.alive(), dtype=np.int64)
        self.n = len(self.alive_index)
        self.name = f"{parent.name}|R"
        pf, pn = self.point.arrays()
        self._pf, self._pn = pf[0], pn[0]

    def embed(self, fixed, neg):
        r = fixed.shape[0]
        pf = np.broadcast_to(self._pf, (r, self.parent.n)).copy()
        pn = np.broadcast_to(self._pn, (r, self.parent.n)).copy()
        pf[:, self.alive_index] = fixed
        pn[:, self.alive_index] = neg
        return pf, pn

    def evaluate_bits(self, bits):
        b = np.atleast_2d(bits)
        pf, pn = self.embed(np.ones(b.shape, dtype=bool), b.astype(bool))
        return self.parent.evaluate_bits(pn)

    def mean_batch(self, fixed, neg):
        return self.parent.mean_batch(*self.embed(fixed, neg))

    def grad_batch(self, fixed, neg):
        return self.parent.grad_batch(*self.embed(fixed, neg))[:, self.alive_index]

    def constant_batch(self, fixed, neg):
        return self.parent.constant_batch(*self.embed(fixed, neg))

    def parent_point(self, x: PartialPoint) -> PartialPoint:
        self._check_point(x)
        fixed, signs = self.point.fixed, self.point.signs
        for j, i in enumerate(self.alive_index):
            if (x.fixed >> j) & 1:
                fixed |= 1 << int(i)
                if (x.signs >> j) & 1:
                    signs |= 1 << int(i)
        return PartialPoint(self.parent.n, fixed, signs)

    def mean_exact(self, x):
        return self.parent.mean_exact(self.parent_point(x))

    def is_monotone(self):
        if self.parent.is_monotone():
            return True
        return super().is_monotone()
