"""
Instantaneous forward rates, the spot rate and related identities.

These exist only when the nominal forward curve is absolutely continuous,
``F(t) = int_t^{T_h} f(s) ds``. Then

.. math::

    r(t, T) = \\frac{4 f(T) M_t}{(2 + \\sigma^2 F(T) A_t)^2}
            = \\frac{f(T)}{M_t F(T)^2} \\bigl(\\log P(t,T)/P(t,T_h)\\bigr)^2,

the spot rate is ``r(t) = r(t, t)`` and the longest forward rate is the
geometric Brownian motion ``f(T_h) M_t``. On a log-linear curve ``f`` jumps
at the data knots; the right limit ``f(t+)`` is used there.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .curve import DENSITY_EDGE
from .errors import (
    BadMaturityOrder,
    InvalidParameter,
    NotAbsolutelyContinuous,
    OffGridTime,
    UnboundedDensity,
)
from .paths import ModelParams, PathState, TimeGrid, simulate_paths, y_values

__all__ = [
    "RateQuote",
    "SDEResidual",
    "forward_rate",
    "forward_rate_alternate",
    "forward_rate_from_log_ratio",
    "spot_rate",
    "spot_rate_from_long_bond",
    "longest_forward_rate",
    "reconstruct_long_bond",
    "long_bond_antiderivative_gap",
    "forward_sde_residual",
    "near_zero_identity",
    "IdentitySweep",
    "identity_sweep",
]


class RateQuote(NamedTuple):
    t: float
    T: float
    rate: object


class SDEResidual(NamedTuple):
    rms: float
    max_abs: float
    n_steps: int
    residuals: np.ndarray


def _require_density(params: ModelParams) -> None:
    if not params.forward.abs_continuous:
        raise NotAbsolutelyContinuous(
            f"the {params.curve.scheme} curve has no density; forward rates do not exist"
        )


def forward_rate_alternate(f_T, F_T, M, A, sigma):
    """``4 f M / (2 + sigma^2 F A)^2``."""
    return 4.0 * f_T * M / (2.0 + sigma * sigma * F_T * A) ** 2


def forward_rate_from_log_ratio(f_T, F_T, M, A, sigma):
    """``f / (M F^2) * Y^2`` with ``Y = log(P(t,T)/P(t,T_h))``; needs ``F > 0``."""
    y = y_values(F_T, M, A, sigma)
    return f_T / (M * F_T * F_T) * y * y


def forward_rate(params: ModelParams, path: PathState, t: float, T: float) -> RateQuote:
    """``r(t, T)`` for grid time ``t <= T < T_h``.

    Both closed forms are evaluated; they must agree to ``1e-10`` relative
    whenever ``F(T) > 0``.
    """
    _require_density(params)
    if not t <= T:
        raise BadMaturityOrder(f"need t <= T, got t={t}, T={T}")
    if T > params.horizon:
        raise InvalidParameter(f"maturity {T} beyond horizon")
    f_T = params.forward.density(T)
    F_T = params.forward.F(T)
    _, M, A = path.node(t)
    rate = forward_rate_alternate(f_T, F_T, M, A, path.sigma)
    if F_T > 0:
        other = forward_rate_from_log_ratio(f_T, F_T, M, A, path.sigma)
        err = np.max(np.abs(other - rate) / np.maximum(np.abs(rate), 1e-300))
        if err > 1e-10:
            raise ArithmeticError(f"forward-rate forms disagree (relative error {err:.3e})")
    return RateQuote(t, T, rate)


def spot_rate(params: ModelParams, path: PathState, t: float) -> RateQuote:
    """``r(t) = 4 f(t) M / (2 + sigma^2 F(t) A)^2``, right limit of ``f`` at knots."""
    _require_density(params)
    if not t < params.horizon:
        raise InvalidParameter("spot rate needs t < T_h")
    f_t = params.forward.density(t)
    F_t = params.forward.F(t)
    _, M, A = path.node(t)
    return RateQuote(t, t, forward_rate_alternate(f_t, F_t, M, A, path.sigma))


def spot_rate_from_long_bond(params: ModelParams, path: PathState, t: float):
    """Second form ``f(t) / (M F(t)^2) * (log P(t, T_h))^2``; needs ``F(t) > 0``."""
    _require_density(params)
    f_t = params.forward.density(t)
    F_t = params.forward.F(t)
    if not F_t > 0:
        raise InvalidParameter("F(t) must be positive")
    _, M, A = path.node(t)
    log_p = -y_values(F_t, M, A, path.sigma)
    return f_t / (M * F_t * F_t) * log_p * log_p


def longest_forward_rate(params: ModelParams, path: PathState, t: float) -> RateQuote:
    """``r(t, T_h) = f(T_h) M_t``."""
    _require_density(params)
    if params.forward.unbounded_density:
        raise UnboundedDensity("density is infinite at the horizon; no longest forward rate")
    _, M, _ = path.node(t)
    return RateQuote(t, params.horizon, params.forward.density(params.horizon) * M)


def long_bond_antiderivative_gap(params: ModelParams, path: PathState, t: float):
    """Closed-form ``int_t^{T_h} r(t, u) du`` via the antiderivative in ``u``.

    Returns ``(antiderivative_difference, 2 F(t) M / (2 + sigma^2 F(t) A))``.
    The antiderivative ``4 M / (sigma^2 A (2 + sigma^2 F(u) A))`` is singular
    at ``A = 0`` so ``t`` must be a positive node.
    """
    _require_density(params)
    _, M, A = path.node(t)
    s2A = path.sigma**2 * A
    if np.any(s2A <= 0):
        raise InvalidParameter("antiderivative form needs A_t > 0 (t > 0)")
    F_t = params.forward.F(t)

    def anti(F_u):
        return 4.0 * M / (s2A * (2.0 + s2A * F_u))

    diff = anti(0.0) - anti(F_t)
    return diff, y_values(F_t, M, A, path.sigma)


def reconstruct_long_bond(
    params: ModelParams,
    path: PathState,
    t: float,
    epsabs: float = 1e-12,
    epsrel: float = 1e-10,
) -> float:
    """``exp(-int_t^{T_h} r(t, u) du)`` by adaptive quadrature for a single path."""
    _require_density(params)
    if path.B.ndim != 1:
        raise InvalidParameter("reconstruct_long_bond works on a single path")
    T_h = params.horizon
    if t >= T_h:
        return 1.0
    _, M, A = path.node(t)
    fwd = params.forward
    upper = T_h - DENSITY_EDGE if fwd.unbounded_density else T_h

    def integrand(u):
        return forward_rate_alternate(fwd.density(u), fwd.F(u), M, A, path.sigma)

    pts = [k for k in fwd.knots if t < k < upper] or None
    val, _ = integrate.quad(integrand, t, upper, points=pts, epsabs=epsabs, epsrel=epsrel, limit=500)
    return float(np.exp(-val))


def forward_sde_residual(params: ModelParams, path: PathState, T: float) -> SDEResidual:
    """Euler residuals of ``dr = sigma r dB - sigma^2 r (int_T^{T_h} r du) dt``.

    Evaluated on every step ``t_i -> t_{i+1}`` with ``t_{i+1} <= T``. The
    integral term is the closed form ``Y_t(F(T))``. Residuals are of size
    ``O(dt)`` per step, so the RMS halves when the step is halved.
    """
    _require_density(params)
    if not T < params.horizon:
        raise InvalidParameter("need T < T_h")
    try:
        k_end = path.grid.index(T)
    except OffGridTime:
        k_end = path.grid.last_before(T)
    f_T = params.forward.density(T)
    F_T = params.forward.F(T)
    s = path.sigma
    M = path.M[..., : k_end + 1]
    A = path.A[..., : k_end + 1]
    r = forward_rate_alternate(f_T, F_T, M, A, s)
    tail = y_values(F_T, M, A, s)
    dB = np.diff(path.B[..., : k_end + 1], axis=-1)
    dt = path.grid.dt[:k_end]
    res = np.diff(r, axis=-1) - s * r[..., :-1] * dB + s * s * r[..., :-1] * tail[..., :-1] * dt
    return SDEResidual(
        float(np.sqrt(np.mean(res * res))),
        float(np.max(np.abs(res))),
        int(k_end),
        res,
    )


def near_zero_identity(params: ModelParams, path: PathState, t: float):
    """``(r(t) r(t,T_h) / log^2 P(t,T_h),  f(T_h) f(t) / F(t)^2)``; the two agree."""
    _require_density(params)
    F_t = params.forward.F(t)
    if not F_t > 0:
        raise InvalidParameter("identity needs F(t) > 0")
    spot = spot_rate(params, path, t).rate
    longest = longest_forward_rate(params, path, t).rate
    _, M, A = path.node(t)
    log_p = -y_values(F_t, M, A, path.sigma)
    lhs = spot * longest / (log_p * log_p)
    fwd = params.forward
    rhs = fwd.density(params.horizon) * fwd.density(t) / (F_t * F_t)
    return lhs, rhs


def _worse(err: float, ref: float, other: float) -> float:
    """Running maximum of relative errors; nan is kept so that it fails later checks."""
    if ref == other or math.isnan(err):
        return err
    e = abs(other - ref) / abs(ref) if ref != 0 else math.inf
    return e if not e <= err else err


class IdentitySweep(NamedTuple):
    n_nodes: int
    forward_vs_alternate: float
    near_zero: float


def identity_sweep(
    params: ModelParams, n_nodes: int = 100, seed: int = 0, step: float = 2.0**-8
) -> IdentitySweep:
    """Maximum relative errors of the two rate identities at random path nodes.

    Node ``i`` uses path ``i`` of the ensemble for ``seed``, a uniformly drawn
    grid time ``t`` and a maturity ``T`` uniform on ``(t, T_h)``.
    """
    _require_density(params)
    if params.forward.unbounded_density:
        raise UnboundedDensity("the near-zero identity needs a finite f(T_h)")
    T_h = params.horizon
    grid = TimeGrid.uniform(0.9 * T_h, step)
    paths = simulate_paths(params, grid, n_nodes, seed)
    rng = np.random.default_rng([seed, 1])
    ks = rng.integers(1, grid.n_steps + 1, size=n_nodes)
    us = rng.uniform(size=n_nodes)
    fwd = params.forward
    err_fwd = err_nz = 0.0
    for i, (k, u) in enumerate(zip(ks, us)):
        t = float(grid.times[k])
        T = t + u * (T_h - t)
        M, A = paths.M[i, k], paths.A[i, k]
        f_T, F_T = fwd.density(T), fwd.F(T)
        a = forward_rate_alternate(f_T, F_T, M, A, paths.sigma)
        b = forward_rate_from_log_ratio(f_T, F_T, M, A, paths.sigma)
        err_fwd = _worse(err_fwd, a, b)
        lhs, rhs = near_zero_identity(params, paths[i], t)
        err_nz = _worse(err_nz, rhs, lhs)
    return IdentitySweep(n_nodes, float(err_fwd), float(err_nz))
