"""
Brownian paths and the processes built on them.

For volatility ``sigma`` the model is driven by

.. math::

    M_t = \\exp(\\sigma B_t - \\sigma^2 t / 2), \\qquad A_t = \\int_0^t M_s\\,ds,

and the log of every discounted bond price is a process

.. math::

    Y_t(x) = \\frac{2 M_t}{2 x^{-1} + \\sigma^2 A_t}, \\qquad Y_0 = x > 0,

solving ``dY = sigma Y dB - (sigma^2 / 2) Y^2 dt``. ``exp(Y)`` is a positive
strict local martingale. The exploding variant with ``-sigma^2 A_t`` in the
denominator reaches ``+inf`` once ``sigma^2 A_t >= 2 / x``.

Discretization: ``M`` is exact at the grid nodes, ``A`` is accumulated with
the trapezoid rule on the same grid. Gaussian increments come from numpy's
ziggurat sampler on per-block Philox streams (see :mod:`longbond.montecarlo`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Union

import numpy as np

from .curve import ForwardCurve, InitialCurve, nominal_forward_curve
from .errors import InvalidParameter, NonPositiveInitial, OffGridTime
from .montecarlo import BLOCK_SIZE, block_generator, blocks

__all__ = [
    "DEFAULT_STEP",
    "ModelParams",
    "TimeGrid",
    "PathState",
    "YSeries",
    "StopIndex",
    "simulate_path",
    "simulate_paths",
    "iter_path_blocks",
    "path_from_increments",
    "terminal_from_increments",
    "coarsen",
    "y_values",
    "y_process",
    "y_process_exploding",
    "stopping_time_level",
]

DEFAULT_STEP = 2.0**-10


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Volatility plus calibrated curve. ``sigma = 1`` is the special model."""

    sigma: float
    curve: InitialCurve
    forward: ForwardCurve = field(init=False, repr=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidParameter(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "forward", nominal_forward_curve(self.curve))

    @property
    def horizon(self) -> float:
        return self.curve.horizon


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray
    step: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise InvalidParameter("grid needs at least two nodes")
        if t[0] != 0.0:
            raise InvalidParameter("grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise InvalidParameter("grid times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, end: float, step: float = DEFAULT_STEP) -> "TimeGrid":
        """Nodes ``0, step, 2 step, ...`` ending exactly at ``end``."""
        if not end > 0 or not step > 0:
            raise InvalidParameter("end and step must be positive")
        n = int(round(end / step))
        if n >= 1 and abs(n * step - end) <= 1e-12 * max(1.0, end):
            times = step * np.arange(n + 1, dtype=float)
            times[-1] = end
        else:
            n = int(np.floor(end / step))
            times = np.append(step * np.arange(n + 1, dtype=float), end)
        return cls(times, float(step))

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def index(self, t: float) -> int:
        """Index of the node at time ``t``; off-grid times are an error."""
        i = int(np.searchsorted(self.times, t - 1e-12 * max(1.0, abs(t))))
        if i < self.times.size and abs(self.times[i] - t) <= 1e-12 * max(1.0, abs(t)):
            return i
        raise OffGridTime(f"t={t} is not a grid node")

    def last_before(self, t: float) -> int:
        """Index of the last node strictly before ``t``."""
        i = int(np.searchsorted(self.times, t - 1e-12 * max(1.0, abs(t)))) - 1
        if i < 0:
            raise OffGridTime(f"no grid node before t={t}")
        return i


@dataclass(frozen=True, eq=False)
class PathState:
    """Path values on a grid; arrays are ``(n_nodes,)`` or ``(n_paths, n_nodes)``."""

    grid: TimeGrid
    sigma: float
    B: np.ndarray
    M: np.ndarray
    A: np.ndarray

    @property
    def n_paths(self) -> int:
        return 1 if self.B.ndim == 1 else self.B.shape[0]

    def node(self, t: float) -> tuple:
        """``(index, M_t, A_t)`` at grid time ``t``."""
        k = self.grid.index(t)
        return k, self.M[..., k], self.A[..., k]

    def __getitem__(self, rows) -> "PathState":
        if self.B.ndim == 1:
            raise TypeError("single path cannot be indexed")
        return PathState(self.grid, self.sigma, self.B[rows], self.M[rows], self.A[rows])


def path_from_increments(grid: TimeGrid, sigma: float, dB: np.ndarray) -> PathState:
    """Build ``(B, M, A)`` from Brownian increments of shape ``(..., n_steps)``."""
    dB = np.asarray(dB, dtype=float)
    lead = dB.shape[:-1]
    B = np.concatenate([np.zeros(lead + (1,)), np.cumsum(dB, axis=-1)], axis=-1)
    M = np.exp(sigma * B - 0.5 * sigma * sigma * grid.times)
    trap = 0.5 * (M[..., 1:] + M[..., :-1]) * grid.dt
    A = np.concatenate([np.zeros(lead + (1,)), np.cumsum(trap, axis=-1)], axis=-1)
    return PathState(grid, float(sigma), B, M, A)


def terminal_from_increments(grid: TimeGrid, sigma: float, dB: np.ndarray) -> tuple:
    """``(M_T, A_T)`` at the last node only; same arithmetic as :func:`path_from_increments`."""
    x = np.cumsum(dB, axis=-1)
    x *= sigma
    x -= (0.5 * sigma * sigma) * grid.times[1:]
    np.exp(x, out=x)
    M_T = x[..., -1].copy()
    dt = grid.dt
    if np.all(dt == dt[0]):
        A_T = dt[0] * (x.sum(axis=-1) - 0.5 * M_T + 0.5)
    else:
        w = 0.5 * (np.append(dt[1:], 0.0) + dt)
        A_T = x @ w + 0.5 * dt[0]
    return M_T, A_T


def _block_increments(grid: TimeGrid, seed: int, block: int, n: int, antithetic: bool) -> np.ndarray:
    rng = block_generator(seed, block)
    z = rng.standard_normal((BLOCK_SIZE, grid.n_steps))
    if antithetic:
        half = BLOCK_SIZE // 2
        z[half:] = -z[:half]
    z *= np.sqrt(grid.dt)
    return z[:n]


def iter_path_blocks(
    sigma: float,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    antithetic: bool = False,
) -> Iterator[PathState]:
    """Stream an ensemble as :class:`PathState` blocks of at most ``BLOCK_SIZE`` paths."""
    for k, n in blocks(n_paths):
        yield path_from_increments(grid, sigma, _block_increments(grid, seed, k, n, antithetic))


def simulate_paths(
    params: Union[ModelParams, float],
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    antithetic: bool = False,
) -> PathState:
    """Simulate an ensemble held in memory; use :func:`iter_path_blocks` for large runs."""
    sigma = params.sigma if isinstance(params, ModelParams) else float(params)
    if isinstance(params, ModelParams) and grid.end > params.horizon * (1 + 1e-12):
        raise InvalidParameter("grid extends beyond the horizon")
    parts = list(iter_path_blocks(sigma, grid, n_paths, seed, antithetic))
    return PathState(
        grid,
        sigma,
        np.concatenate([p.B for p in parts]),
        np.concatenate([p.M for p in parts]),
        np.concatenate([p.A for p in parts]),
    )


def simulate_path(
    params: Union[ModelParams, float], grid: TimeGrid, seed: int, index: int = 0
) -> PathState:
    """Path number ``index`` of the ensemble for ``seed`` (1-D arrays)."""
    sigma = params.sigma if isinstance(params, ModelParams) else float(params)
    block, row = divmod(index, BLOCK_SIZE)
    dB = _block_increments(grid, seed, block, BLOCK_SIZE, False)[row]
    return path_from_increments(grid, sigma, dB)


def coarsen(path: PathState, factor: int) -> PathState:
    """Same Brownian path observed on every ``factor``-th node; ``A`` is re-accumulated."""
    if factor < 1 or path.grid.n_steps % factor:
        raise InvalidParameter("factor must divide the number of steps")
    times = path.grid.times[::factor]
    grid = TimeGrid(times.copy(), path.grid.step * factor)
    dB = np.diff(path.B[..., ::factor], axis=-1)
    return path_from_increments(grid, path.sigma, dB)


def y_values(x0, M, A, sigma: float):
    """``2 M x0 / (2 + sigma^2 A x0)``; equals 0 where ``x0 == 0``."""
    return 2.0 * M * x0 / (2.0 + sigma * sigma * A * x0)


class YSeries(NamedTuple):
    x0: float
    values: np.ndarray
    exploded_at: Optional[Union[int, np.ndarray]] = None


class StopIndex(NamedTuple):
    index: Union[int, np.ndarray]
    triggered: Union[bool, np.ndarray]


def _check_sigma(path: PathState, params: Optional[ModelParams]) -> None:
    if params is not None and abs(params.sigma - path.sigma) > 1e-15 * params.sigma:
        raise InvalidParameter("path was simulated with a different sigma")


def y_process(x0: float, path: PathState, params: Optional[ModelParams] = None) -> YSeries:
    """Log discounted price ``Y_t`` started at ``x0 > 0`` along ``path``."""
    _check_sigma(path, params)
    if not x0 > 0:
        raise NonPositiveInitial(f"initial value must be positive, got {x0}")
    return YSeries(float(x0), y_values(x0, path.M, path.A, path.sigma))


def y_process_exploding(
    x0: float, path: PathState, params: Optional[ModelParams] = None
) -> YSeries:
    """``2 M / (2/x0 - sigma^2 A)`` until ``sigma^2 A`` reaches ``2/x0``, then ``+inf``.

    ``exploded_at`` is the first exploded node (``None`` if none) for a single
    path, or an integer array with ``-1`` for no explosion on an ensemble.
    """
    _check_sigma(path, params)
    if not x0 > 0:
        raise NonPositiveInitial(f"initial value must be positive, got {x0}")
    s2A = path.sigma**2 * path.A
    barrier = 2.0 / x0
    gone = s2A >= barrier
    with np.errstate(divide="ignore"):
        vals = np.where(gone, np.inf, 2.0 * path.M / np.where(gone, 1.0, barrier - s2A))
    hit = np.where(gone.any(axis=-1), gone.argmax(axis=-1), -1)
    if path.B.ndim == 1:
        exploded = None if hit < 0 else int(hit)
    else:
        exploded = hit
    return YSeries(float(x0), vals, exploded)


def stopping_time_level(
    path: PathState, params: Optional[ModelParams], x0: float, level: float
) -> StopIndex:
    """First node where ``Y_t(x0) >= level``; the final node, untriggered, otherwise."""
    if not level > 0:
        raise InvalidParameter("level must be positive")
    y = y_process(x0, path, params).values
    above = y >= level
    triggered = above.any(axis=-1)
    idx = np.where(triggered, above.argmax(axis=-1), path.grid.n_steps)
    if path.B.ndim == 1:
        return StopIndex(int(idx), bool(triggered))
    return StopIndex(idx, triggered)
