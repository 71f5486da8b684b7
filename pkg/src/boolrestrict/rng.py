"""Counter-based seeding: trials are cut into fixed-size blocks and each block
draws from its own substream keyed by (seed, tag, block index). Results depend
only on (seed, tag, trials), never on how many workers ran the blocks."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, TypeVar

import numpy as np

BLOCK = 4096

T = TypeVar("T")


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def block_sizes(trials: int, block: int = BLOCK) -> list[int]:
    full, rest = divmod(trials, block)
    return [block] * full + ([rest] if rest else [])


def _call(args):
    fn, seed, tag, idx, size = args
    return fn(substream(seed, tag, idx), size)


def map_blocks(fn: Callable[[np.random.Generator, int], T], trials: int, seed: int,
               tag: int = 0, workers: int = 1, block: int = BLOCK) -> list[T]:
    """Run ``fn(rng, size)`` once per block, in block order."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    jobs = [(fn, seed, tag, i, s) for i, s in enumerate(block_sizes(trials, block))]
    if workers <= 1 or len(jobs) == 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def proportion(hits: int, trials: int) -> tuple[float, float]:
    """Estimate and binomial standard error."""
    p = hits / trials
    return p, float(np.sqrt(p * (1 - p) / trials))
