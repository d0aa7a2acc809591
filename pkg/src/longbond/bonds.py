"""
Long-bond, T-bond and discounted bond prices along simulated paths.

All prices are evaluated in log form,

.. math::

    \\log P(t, T_h) = -Y_t(F(t)), \\qquad
    \\log P(t, T) = Y_t(F(T)) - Y_t(F(t)),

with ``Y_t(x) = 2 M_t x / (2 + sigma^2 A_t x)``. The equivalent power form
(a ratio of initial prices raised to a random exponent) loses precision when
``F`` is tiny and is only used as a test oracle.

Times must be grid nodes of the path; nothing is interpolated.
"""

from __future__ import annotations

import numpy as np

from .errors import BadMaturityOrder, MaturityBeyondHorizon, NonPositiveInitial
from .paths import ModelParams, PathState, y_values

__all__ = [
    "long_bond_price",
    "log_long_bond_price",
    "bond_price",
    "log_bond_price",
    "discounted_bond",
    "nominal_forward_rate_simple",
    "log_bond_path",
    "log_long_bond_path",
]


def _check_maturity(params: ModelParams, t: float, T: float) -> None:
    if T > params.horizon * (1 + 1e-12):
        raise MaturityBeyondHorizon(f"maturity {T} beyond horizon {params.horizon}")
    if t > T * (1 + 1e-12) + 1e-12:
        raise BadMaturityOrder(f"t={t} is after maturity {T}")


def log_long_bond_price(params: ModelParams, path: PathState, t: float):
    _, M, A = path.node(t)
    return -y_values(params.forward.F(min(t, params.horizon)), M, A, path.sigma)


def long_bond_price(params: ModelParams, path: PathState, t: float):
    """``P(t, T_h) = exp(-2 M F(t) / (2 + sigma^2 A F(t)))``; exactly 1 at ``t = T_h``."""
    _check_maturity(params, t, params.horizon)
    return np.exp(log_long_bond_price(params, path, t))


def log_bond_price(params: ModelParams, path: PathState, t: float, T: float):
    _check_maturity(params, t, T)
    _, M, A = path.node(t)
    F = params.forward.F
    return y_values(F(T), M, A, path.sigma) - y_values(F(t), M, A, path.sigma)


def bond_price(params: ModelParams, path: PathState, t: float, T: float):
    """Price at grid time ``t`` of the bond maturing at ``T <= T_h``."""
    return np.exp(log_bond_price(params, path, t, T))


def discounted_bond(params: ModelParams, path: PathState, t: float, T: float):
    """``P(t, T) / P(t, T_h) = exp(Y_t(F(T)))``.

    On a non-strict curve ``F(T)`` may vanish before the horizon; the ratio
    is then exactly 1.
    """
    _check_maturity(params, t, T)
    _, M, A = path.node(t)
    x0 = params.forward.F(T)
    if np.any(np.asarray(x0) < 0):
        raise NonPositiveInitial("negative nominal forward value")
    return np.exp(y_values(x0, M, A, path.sigma))


def nominal_forward_rate_simple(params: ModelParams, path: PathState, t: float, T1: float, T2: float):
    """``(T2 - T1)^{-1} log(P(t, T1) / P(t, T2))`` at grid time ``t <= T1 < T2``."""
    if not T1 < T2:
        raise BadMaturityOrder(f"need T1 < T2, got {T1}, {T2}")
    _check_maturity(params, t, T1)
    _check_maturity(params, t, T2)
    _, M, A = path.node(t)
    F = params.forward.F
    y1 = y_values(F(T1), M, A, path.sigma)
    y2 = y_values(F(T2), M, A, path.sigma)
    return (y1 - y2) / (T2 - T1)


def log_long_bond_path(params: ModelParams, path: PathState) -> np.ndarray:
    """``log P(t_k, T_h)`` at every node of ``path``."""
    F_t = params.forward.F(path.grid.times)
    return -y_values(F_t, path.M, path.A, path.sigma)


def log_bond_path(params: ModelParams, path: PathState, T: float) -> np.ndarray:
    """``log P(t_k, T)`` at every node ``t_k <= T``; ``nan`` after maturity."""
    if T > params.horizon * (1 + 1e-12):
        raise MaturityBeyondHorizon(f"maturity {T} beyond horizon {params.horizon}")
    times = path.grid.times
    live = times <= T * (1 + 1e-12) + 1e-12
    F_t = params.forward.F(np.where(live, times, T))
    out = y_values(params.forward.F(T), path.M, path.A, path.sigma) - y_values(
        F_t, path.M, path.A, path.sigma
    )
    return np.where(live, out, np.nan)
