"""Points of the cube {-1,1}^n and partial points of {-1,0,1}^n.

Sign convention used everywhere in the package: bit ``b_i = 1`` encodes
``x_i = -1`` ("true"), bit ``b_i = 0`` encodes ``x_i = +1`` ("false").
Coordinates are 0-based; coordinate ``i`` is bit ``i`` of an integer index.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def _check_mask(n: int, mask: int, name: str) -> None:
    if mask < 0 or mask >> n:
        raise ValueError(f"{name}={mask:#x} does not fit in {n} bits")


@dataclass(frozen=True)
class BitPoint:
    """A point of {-1,1}^n stored as an n-bit integer."""

    n: int
    bits: int

    def __post_init__(self):
        _check_mask(self.n, self.bits, "bits")

    @classmethod
    def from_signs(cls, signs: Sequence[int]) -> "BitPoint":
        bits = 0
        for i, s in enumerate(signs):
            if s == -1:
                bits |= 1 << i
            elif s != 1:
                raise ValueError(f"coordinate {i} is {s}, expected +1 or -1")
        return cls(len(signs), bits)

    def signs(self) -> tuple[int, ...]:
        return tuple(-1 if (self.bits >> i) & 1 else 1 for i in range(self.n))

    def flip(self, block: int) -> "BitPoint":
        return BitPoint(self.n, self.bits ^ block)

    def as_array(self) -> np.ndarray:
        return ((self.bits >> np.arange(self.n)) & 1).astype(bool)


@dataclass(frozen=True)
class PartialPoint:
    """A point of {-1,0,1}^n: ``fixed`` marks determined coordinates and
    ``signs`` holds their bits (1 means -1). Alive coordinates read as 0."""

    n: int
    fixed: int = 0
    signs: int = 0

    def __post_init__(self):
        _check_mask(self.n, self.fixed, "fixed")
        _check_mask(self.n, self.signs, "signs")
        if self.signs & ~self.fixed:
            # normalise: sign bits are meaningless on alive coordinates
            object.__setattr__(self, "signs", self.signs & self.fixed)

    @classmethod
    def alive_point(cls, n: int) -> "PartialPoint":
        return cls(n, 0, 0)

    @classmethod
    def from_ternary(cls, values: Sequence[int]) -> "PartialPoint":
        fixed = signs = 0
        for i, v in enumerate(values):
            if v == 0:
                continue
            if v not in (-1, 1):
                raise ValueError(f"coordinate {i} is {v}, expected -1, 0 or 1")
            fixed |= 1 << i
            if v == -1:
                signs |= 1 << i
        return cls(len(values), fixed, signs)

    def ternary(self) -> tuple[int, ...]:
        out = []
        for i in range(self.n):
            if not (self.fixed >> i) & 1:
                out.append(0)
            else:
                out.append(-1 if (self.signs >> i) & 1 else 1)
        return tuple(out)

    def is_alive(self, i: int) -> bool:
        return not (self.fixed >> i) & 1

    def alive(self) -> list[int]:
        return [i for i in range(self.n) if not (self.fixed >> i) & 1]

    def n_alive(self) -> int:
        return self.n - bin(self.fixed).count("1")

    def fix(self, i: int, value: int) -> "PartialPoint":
        """Return a copy with alive coordinate ``i`` set to ``value`` (+1/-1)."""
        if not self.is_alive(i):
            raise ValueError(f"coordinate {i} is already fixed")
        if value not in (-1, 1):
            raise ValueError("value must be +1 or -1")
        bit = 1 << i
        return PartialPoint(self.n, self.fixed | bit, self.signs | (bit if value == -1 else 0))

    def set(self, i: int, value: int) -> "PartialPoint":
        """Like :meth:`fix` but overwrites an already fixed coordinate."""
        bit = 1 << i
        base = PartialPoint(self.n, self.fixed & ~bit, self.signs & ~bit)
        return base.fix(i, value)

    def is_complete(self) -> bool:
        return self.fixed == (1 << self.n) - 1

    def to_bitpoint(self) -> BitPoint:
        if not self.is_complete():
            raise ValueError("partial point still has alive coordinates")
        return BitPoint(self.n, self.signs)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-vector batch form ``(fixed, neg)``, each of shape (1, n)."""
        idx = np.arange(self.n)
        fixed = ((self.fixed >> idx) & 1).astype(bool)
        neg = ((self.signs >> idx) & 1).astype(bool)
        return fixed[None, :], neg[None, :]


def masks_to_arrays(n: int, fixed: Iterable[int], signs: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(n)
    f = np.array(list(fixed), dtype=np.int64)[:, None]
    s = np.array(list(signs), dtype=np.int64)[:, None]
    fa = ((f >> idx) & 1).astype(bool)
    return fa, ((s >> idx) & 1).astype(bool) & fa


def arrays_to_masks(fixed: np.ndarray, neg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = np.int64(1) << np.arange(fixed.shape[1], dtype=np.int64)
    return (fixed.astype(np.int64) @ w), ((fixed & neg).astype(np.int64) @ w)


def bits_to_index(bits: np.ndarray) -> np.ndarray:
    """Table index of each row of a boolean (R, n) bit matrix."""
    w = np.int64(1) << np.arange(bits.shape[-1], dtype=np.int64)
    return bits.astype(np.int64) @ w


def index_to_bits(index: np.ndarray, n: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    return ((index[..., None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)
