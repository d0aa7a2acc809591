"""Monte Carlo plumbing: seeded block streams, estimates and their merging.

Paths are generated in fixed-size blocks. Block ``k`` of seed ``s`` draws
from its own Philox stream keyed by ``SeedSequence(s, spawn_key=(k,))``, so
path ``i`` is the same whatever the total number of paths requested and
whichever worker produced it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, TypeVar

import numpy as np

BLOCK_SIZE = 256

T = TypeVar("T")


def block_generator(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n_paths: int, block_size: int = BLOCK_SIZE) -> Iterator[tuple]:
    """Yield ``(block_index, n_in_block)`` covering ``n_paths`` paths."""
    n_blocks = -(-n_paths // block_size)
    for k in range(n_blocks):
        yield k, min(block_size, n_paths - k * block_size)


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo settings shared by the estimators."""

    n_paths: int = 100_000
    seed: int = 0
    step: Optional[float] = None
    threads: int = 1

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValueError("n_paths must be at least 2")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: Optional[int] = None

    def z_score(self, target: float) -> float:
        """``(target - mean) / stderr``; infinite when the estimate is exact."""
        diff = target - self.mean
        if self.stderr == 0.0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n_paths, "seed": self.seed}


@dataclass
class RunningStats:
    """Mergeable count/mean/M2 accumulator (Chan et al. pairwise update)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, values: np.ndarray) -> "RunningStats":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return self
        other = RunningStats(values.size, float(values.mean()), float(((values - values.mean()) ** 2).sum()))
        return self.merge(other)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean += delta * other.n / n
        self.m2 += other.m2 + delta * delta * self.n * other.n / n
        self.n = n
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    def estimate(self, seed: Optional[int] = None) -> MCEstimate:
        se = math.sqrt(self.variance / self.n) if self.n > 1 else 0.0
        return MCEstimate(self.mean, se, self.n, seed)


def ordered_map(fn: Callable[..., T], items: Iterable, threads: int = 1) -> list:
    """Map in order, optionally over a thread pool; results keep input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(*it) if isinstance(it, tuple) else fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [pool.submit(fn, *it) if isinstance(it, tuple) else pool.submit(fn, it) for it in items]
        return [f.result() for f in futs]
