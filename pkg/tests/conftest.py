"""Shared brute-force oracles. They use plain Python loops and Fractions and
never touch the package's ternary tables, transforms or closed forms."""
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def table_of(f):
    return [int(v) for v in f.table().values]


def brute_mean(values, n, fixed, signs):
    """Average of a table over the completions of the alive coordinates."""
    alive = [i for i in range(n) if not (fixed >> i) & 1]
    base = signs & fixed
    total = 0
    for bits in product((0, 1), repeat=len(alive)):
        k = base
        for i, b in zip(alive, bits):
            k |= b << i
        total += values[k]
    return Fraction(total, 1 << len(alive))


def brute_coeff(values, n, S):
    total = 0
    for k, v in enumerate(values):
        total += v * (-1) ** bin(S & k).count("1")
    return Fraction(total, 1 << n)


def brute_derivative(values, n, i, fixed, signs):
    bit = 1 << i
    f2 = fixed | bit
    plus = brute_mean(values, n, f2, signs & ~bit)
    minus = brute_mean(values, n, f2, signs | bit)
    return (plus - minus) / 2


def signs_to_index(signs):
    return sum(1 << i for i, s in enumerate(signs) if s == -1)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
