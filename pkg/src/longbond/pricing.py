"""
Caplets, forward contracts and the naive-pricing pitfall.

Caplet prices use the distribution functions

.. math::

    K'(s, x, y) = \\Pr\\Bigl\\{\\frac{2 M_s}{2 x^{-1} + A_s} \\ge y\\Bigr\\},
    \\qquad
    K(s, x, y) = \\Pr\\Bigl\\{\\frac{2 M_s}{2 x^{-1} - A_s} \\ge y
                 \\ \\text{or}\\ A_s \\ge 2 x^{-1}\\Bigr\\},

of the special model (``sigma = 1``) evaluated on the clock ``s = sigma^2 tau``.
Both are estimated from fresh independent samples of ``(M_s, A_s)``; since
``A`` is increasing, explosion before ``s`` is the event ``A_s >= 2/x``.
The caplet estimator evaluates ``K`` and ``K'`` on the same samples, and
its standard error is that of the per-path payoff difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .bonds import log_bond_price
from .errors import BadMaturityOrder, InvalidParameter, NonPositiveX, NonStrictCurve
from .montecarlo import MCConfig, MCEstimate, RunningStats, blocks, ordered_map
from .paths import (
    DEFAULT_STEP,
    ModelParams,
    PathState,
    TimeGrid,
    path_from_increments,
    terminal_from_increments,
    _block_increments,
    y_values,
)

__all__ = [
    "CapletSpec",
    "ForwardQuote",
    "PitfallReport",
    "terminal_samples",
    "k_fn",
    "k_prime_fn",
    "k_pair",
    "caplet_price",
    "caplet_price_approx",
    "k_approx",
    "k_prime_approx",
    "forward_contract_long",
    "forward_contract",
    "pitfall_gap",
]


@dataclass(frozen=True)
class CapletSpec:
    """Caplet on the simple rate over ``[T, Tprime]`` with cap ``k``."""

    T: float
    Tprime: float
    cap: float
    kappa: float = field(init=False)
    delta: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.T < self.Tprime:
            raise BadMaturityOrder(f"need 0 < T < Tprime, got {self.T}, {self.Tprime}")
        object.__setattr__(self, "delta", self.Tprime - self.T)
        object.__setattr__(self, "kappa", 1.0 + self.delta * self.cap)


@dataclass(frozen=True)
class ForwardQuote:
    price: object
    positions: dict


@dataclass(frozen=True)
class PitfallReport:
    naive: MCEstimate
    correct: float
    gap: float
    z_score: float
    stopped: Optional[MCEstimate] = None

    @property
    def verdict(self) -> str:
        return "gap" if self.z_score > 3.0 else "inconclusive"

    def as_dict(self) -> dict:
        out = {
            "naive": self.naive.as_dict(),
            "correct": self.correct,
            "gap": self.gap,
            "z": self.z_score,
            "verdict": self.verdict,
        }
        if self.stopped is not None:
            out["stopped"] = self.stopped.as_dict()
        return out


# ---------------------------------------------------------------------------
# (M_s, A_s) samples for the K functions


def _default_step(s: float, mc: MCConfig) -> float:
    return mc.step if mc.step is not None else DEFAULT_STEP * min(1.0, s)


def _terminal_block(grid: TimeGrid, seed: int, k: int, n: int):
    return terminal_from_increments(grid, 1.0, _block_increments(grid, seed, k, n, False))


def terminal_samples(s: float, mc: MCConfig) -> tuple:
    """Special-model ``(M_s, A_s)`` for ``mc.n_paths`` independent paths."""
    if not s > 0:
        raise InvalidParameter("s must be positive")
    grid = TimeGrid.uniform(s, _default_step(s, mc))
    parts = ordered_map(
        lambda k, n: _terminal_block(grid, mc.seed, k, n), list(blocks(mc.n_paths)), mc.threads
    )
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _k_event(M, A, x, y):
    barrier = 2.0 / x
    gone = A >= barrier
    with np.errstate(divide="ignore"):
        ratio = 2.0 * M / np.where(gone, 1.0, barrier - A)
    return gone | (ratio >= y)


def _k_prime_event(M, A, x, y):
    return 2.0 * M / (2.0 / x + A) >= y


def _indicator_estimate(hits: np.ndarray, seed) -> MCEstimate:
    return RunningStats().add(hits.astype(float)).estimate(seed)


def _check_kx(s: float, x: float) -> None:
    if not x > 0:
        raise NonPositiveX(f"x must be positive, got {x}")
    if s < 0:
        raise InvalidParameter("s must be non-negative")


def k_prime_fn(s: float, x: float, y: float, mc: MCConfig, samples=None) -> MCEstimate:
    """Monte Carlo estimate of ``K'(s, x, y)``; exact at ``s = 0`` and for ``y <= 0``."""
    _check_kx(s, x)
    if y <= 0:
        return MCEstimate(1.0, 0.0, mc.n_paths, mc.seed)
    if s == 0:
        return MCEstimate(float(x >= y), 0.0, mc.n_paths, mc.seed)
    M, A = samples if samples is not None else terminal_samples(s, mc)
    return _indicator_estimate(_k_prime_event(M, A, x, y), mc.seed)


def k_fn(s: float, x: float, y: float, mc: MCConfig, samples=None) -> MCEstimate:
    """Monte Carlo estimate of ``K(s, x, y)``, explosion mass included."""
    _check_kx(s, x)
    if y <= 0:
        return MCEstimate(1.0, 0.0, mc.n_paths, mc.seed)
    if s == 0:
        return MCEstimate(float(x >= y), 0.0, mc.n_paths, mc.seed)
    M, A = samples if samples is not None else terminal_samples(s, mc)
    return _indicator_estimate(_k_event(M, A, x, y), mc.seed)


def k_pair(s: float, x: float, y: float, mc: MCConfig, samples=None) -> tuple:
    """``(K, K')`` on common random numbers."""
    if samples is None and s > 0 and y > 0:
        _check_kx(s, x)
        samples = terminal_samples(s, mc)
    return k_fn(s, x, y, mc, samples), k_prime_fn(s, x, y, mc, samples)


def k_approx(s: float, x: float, y: float) -> float:
    """Small-``s`` normal approximation ``Phi((x-y)/(sqrt(s) x) + sqrt(s) x / 2)``."""
    r = math.sqrt(s)
    return float(ndtr((x - y) / (r * x) + 0.5 * r * x))


def k_prime_approx(s: float, x: float, y: float) -> float:
    """Small-``s`` normal approximation ``Phi((x-y)/(sqrt(s) x) - sqrt(s) x / 2)``."""
    r = math.sqrt(s)
    return float(ndtr((x - y) / (r * x) - 0.5 * r * x))


# ---------------------------------------------------------------------------
# caplets


def _node_logs(params: ModelParams, path: Optional[PathState], t: float, T: float, Tp: float):
    """``log P(t,T)`` and ``log P(t,T')``; ``path=None`` means the initial curve at ``t = 0``."""
    if path is None:
        if t != 0:
            raise InvalidParameter("a path is required for t > 0")
        lp = params.curve.log_price
        return lp(T), lp(Tp)
    if path.B.ndim != 1:
        raise InvalidParameter("caplet pricing works on a single path node")
    return float(log_bond_price(params, path, t, T)), float(log_bond_price(params, path, t, Tp))


def _caplet_inputs(params, t, path, spec):
    if spec.Tprime > params.horizon * (1 + 1e-12):
        raise BadMaturityOrder("payment date beyond horizon")
    if t > spec.T:
        raise BadMaturityOrder("caplet already fixed")
    lT, lTp = _node_logs(params, path, t, spec.T, spec.Tprime)
    x = lT - lTp
    if not x > 0:
        raise NonPositiveX(f"log(P(t,T)/P(t,T')) = {x} is not positive")
    return math.exp(lT), math.exp(lTp), x


def caplet_price(
    params: ModelParams,
    t: float,
    spec: CapletSpec,
    mc: MCConfig,
    path: Optional[PathState] = None,
) -> MCEstimate:
    """Monte Carlo caplet value at grid time ``t`` on ``path`` (``None``: ``t = 0``)."""
    P_T, P_Tp, x = _caplet_inputs(params, t, path, spec)
    y = math.log(spec.kappa)
    s = params.sigma**2 * (spec.T - t)
    scale = 1.0 / spec.delta
    if s == 0 or y <= 0:
        K = 1.0 if y <= 0 else float(x >= y)
        return MCEstimate(scale * (P_T - spec.kappa * P_Tp) * K, 0.0, mc.n_paths, mc.seed)
    M, A = terminal_samples(s, mc)
    payoff = scale * (P_T * _k_event(M, A, x, y) - spec.kappa * P_Tp * _k_prime_event(M, A, x, y))
    return RunningStats().add(payoff).estimate(mc.seed)


def caplet_price_approx(
    params: ModelParams, t: float, spec: CapletSpec, path: Optional[PathState] = None
) -> float:
    """Normal approximation for small ``sigma`` or short time to fixing."""
    P_T, P_Tp, x = _caplet_inputs(params, t, path, spec)
    y = math.log(spec.kappa)
    vol = params.sigma * math.sqrt(spec.T - t) * x
    if vol < 1e-14:
        return max(P_T - spec.kappa * P_Tp, 0.0) / spec.delta
    b1 = (x - y) / vol + 0.5 * vol
    b2 = (x - y) / vol - 0.5 * vol
    return float((P_T * ndtr(b1) - spec.kappa * P_Tp * ndtr(b2)) / spec.delta)


# ---------------------------------------------------------------------------
# forwards


def forward_contract_long(
    params: ModelParams, t: float, T: float, kappa: float, path: Optional[PathState] = None
):
    """Forward on the long bond for delivery at ``T < T_h``: ``P(t,T_h) - kappa P(t,T)``."""
    if not T < params.horizon:
        raise BadMaturityOrder("delivery must precede the horizon")
    lT, lh = _node_logs(params, path, t, T, params.horizon)
    return math.exp(lh) - kappa * math.exp(lT)


def forward_contract(
    params: ModelParams,
    t: float,
    T: float,
    Tprime: float,
    kappa: float,
    path: Optional[PathState] = None,
) -> ForwardQuote:
    """Forward on the ``Tprime`` bond delivered at ``T``; replicated by ``(-kappa, 1, 0)``."""
    if not t <= T < Tprime <= params.horizon:
        raise BadMaturityOrder(f"need t <= T < T' <= T_h, got {t}, {T}, {Tprime}")
    lT, lTp = _node_logs(params, path, t, T, Tprime)
    positions = {T: -kappa, Tprime: 1.0}
    if Tprime < params.horizon:
        positions[params.horizon] = 0.0
    return ForwardQuote(math.exp(lTp) - kappa * math.exp(lT), positions)


# ---------------------------------------------------------------------------
# naive pricing pitfall


def _pitfall_block(grid, sigma, x0, seed, k, n, stop_level):
    dB = _block_increments(grid, seed, k, n, False)
    if stop_level is None:
        M_T, A_T = terminal_from_increments(grid, sigma, dB)
        return RunningStats().add(np.exp(y_values(x0, M_T, A_T, sigma))), None
    p = path_from_increments(grid, sigma, dB)
    y = y_values(x0, p.M, p.A, sigma)
    plain = RunningStats().add(np.exp(y[:, -1]))
    above = y >= stop_level
    hit = above.any(axis=1)
    idx = np.where(hit, above.argmax(axis=1), y.shape[1] - 1)
    stopped = RunningStats().add(np.exp(y[np.arange(y.shape[0]), idx]))
    return plain, stopped


def pitfall_gap(
    params: ModelParams,
    T: float,
    mc: MCConfig,
    stop_level: Optional[float] = None,
) -> PitfallReport:
    """Compare ``E[P(T,T)/P(T,T_h)]`` with the correct ``P(0,T)/P(0,T_h)``.

    The naive expectation is strictly smaller because ``exp(Y)`` is a strict
    local martingale. With ``stop_level`` the same paths are also stopped
    at the first node where ``Y >= stop_level``, which restores equality.
    """
    if not 0 < T < params.horizon:
        raise BadMaturityOrder("need 0 < T < T_h")
    x0 = params.forward.F(T)
    if not x0 > 0:
        raise NonStrictCurve(f"F(T) = {x0}; the pitfall needs F(T) > 0")
    grid = TimeGrid.uniform(T, mc.step or DEFAULT_STEP)
    parts = ordered_map(
        lambda k, n: _pitfall_block(grid, params.sigma, x0, mc.seed, k, n, stop_level),
        list(blocks(mc.n_paths)),
        mc.threads,
    )
    plain, stopped = RunningStats(), RunningStats()
    for a, b in parts:
        plain.merge(a)
        if b is not None:
            stopped.merge(b)
    naive = plain.estimate(mc.seed)
    correct = math.exp(x0)
    gap = correct - naive.mean
    z = gap / naive.stderr if naive.stderr > 0 else math.inf
    return PitfallReport(naive, correct, gap, z, stopped.estimate(mc.seed) if stop_level else None)
