"""
Initial discount curves and the nominal forward curve.

An :class:`InitialCurve` is the calibration object ``T -> P(0, T)`` on
``[0, T_h]``. The model never needs instantaneous forward rates; it only
needs the *nominal forward curve*

.. math::

    F(t) = \\log \\frac{P(0, t)}{P(0, T_h)},

which is non-negative, non-increasing and vanishes at the horizon. When
``F`` is absolutely continuous its density ``f = -F'`` is attached to the
:class:`ForwardCurve` and the rate machinery in :mod:`longbond.rates`
becomes available.

Four schemes are supported:

* ``loglinear`` -- piecewise linear in ``log P(0, T)`` through data points
  (piecewise-constant density, right-continuous at the knots),
* ``powerlaw`` -- ``F(t) = a (T_h - t)^b``,
* ``cantor`` -- ``F(t) = 1 - C(t)`` with ``C`` a finite-depth iterate of the
  Cantor function and ``T_h = 1``; no density,
* ``user-table`` -- any monotone user callable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    EmptyData,
    HorizonMismatch,
    InvalidParameter,
    NonMonotoneData,
    UnboundedDensity,
)

__all__ = [
    "CurvePoint",
    "InitialCurve",
    "ForwardCurve",
    "build_initial_curve",
    "flat_curve",
    "power_law_curve",
    "cantor_curve",
    "user_curve",
    "nominal_forward_curve",
    "read_curve_csv",
    "cantor_function",
    "DENSITY_EDGE",
]

ArrayLike = Union[float, np.ndarray]

# power-law densities with b < 1 are only evaluated on t < T_h - DENSITY_EDGE
DENSITY_EDGE = 1e-9


@dataclass(frozen=True)
class CurvePoint:
    maturity: float
    price: float

    def __post_init__(self):
        if not self.maturity >= 0.0:
            raise InvalidParameter(f"maturity must be >= 0, got {self.maturity}")
        if not self.price > 0.0:
            raise InvalidParameter(f"price must be positive, got {self.price}")
        if self.price > 1.0:
            raise NonMonotoneData(f"price {self.price} exceeds P(0,0) = 1")


@dataclass(frozen=True, eq=False)
class InitialCurve:
    """Calibrated initial curve ``T -> P(0, T)`` on ``[0, horizon]``.

    Instances are immutable. Use the module-level constructors rather than
    building one directly.
    """

    horizon: float
    scheme: str
    log_price_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    nominal_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    density_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    strict: bool = True
    knots: tuple = ()
    unbounded_density: bool = False
    params: dict = field(default_factory=dict)

    def _check_range(self, t: np.ndarray) -> None:
        if np.any(t < -1e-12) or np.any(t > self.horizon * (1 + 1e-12) + 1e-12):
            raise InvalidParameter(f"time outside [0, {self.horizon}]")

    def log_price(self, T: ArrayLike) -> ArrayLike:
        T = np.asarray(T, dtype=float)
        self._check_range(T)
        out = self.log_price_fn(np.clip(T, 0.0, self.horizon))
        return out if out.ndim else float(out)

    def price(self, T: ArrayLike) -> ArrayLike:
        """Discount factor ``P(0, T)``."""
        return np.exp(self.log_price(T))

    def __call__(self, T: ArrayLike) -> ArrayLike:
        return self.price(T)

    @property
    def long_bond_price(self) -> float:
        return float(np.exp(self.log_price(self.horizon)))

    @property
    def abs_continuous(self) -> bool:
        return self.density_fn is not None


@dataclass(frozen=True, eq=False)
class ForwardCurve:
    """Nominal forward curve ``F`` with optional density ``f``."""

    horizon: float
    F_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    density_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    knots: tuple = ()
    unbounded_density: bool = False
    strict: bool = True

    @property
    def abs_continuous(self) -> bool:
        return self.density_fn is not None

    def F(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.horizon * (1 + 1e-12) + 1e-12):
            raise InvalidParameter(f"time outside [0, {self.horizon}]")
        out = self.F_fn(np.clip(t, 0.0, self.horizon))
        return out if out.ndim else float(out)

    __call__ = F

    def density(self, t: ArrayLike) -> ArrayLike:
        """Density ``f(t) = -F'(t)``; right limit at knots, left limit at ``T_h``."""
        from .errors import NotAbsolutelyContinuous

        if self.density_fn is None:
            raise NotAbsolutelyContinuous(
                "nominal forward curve is not absolutely continuous; no density exists"
            )
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.horizon * (1 + 1e-12) + 1e-12):
            raise InvalidParameter(f"time outside [0, {self.horizon}]")
        if self.unbounded_density and np.any(t > self.horizon - DENSITY_EDGE):
            raise UnboundedDensity(
                f"density is unbounded at the horizon; evaluate only below T_h - {DENSITY_EDGE}"
            )
        out = self.density_fn(np.clip(t, 0.0, self.horizon))
        return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# constructors


def _as_points(points: Iterable) -> list:
    out = []
    for p in points:
        if isinstance(p, CurvePoint):
            out.append(p)
        else:
            m, pr = p
            out.append(CurvePoint(float(m), float(pr)))
    return out


def build_initial_curve(
    points: Sequence,
    scheme: str = "loglinear",
    horizon: Optional[float] = None,
) -> InitialCurve:
    """Interpolate observed discount factors into an :class:`InitialCurve`.

    ``points`` is a maturity-sorted sequence of :class:`CurvePoint` or
    ``(maturity, price)`` pairs. ``(0, 1)`` is prepended when missing. The
    last maturity is the horizon; passing ``horizon`` only checks it.

    Equal consecutive prices are accepted and produce a non-strict curve.
    """
    if scheme not in ("loglinear", "piecewise-linear-log-price"):
        raise InvalidParameter(
            f"scheme {scheme!r} cannot be built from data points; "
            "use power_law_curve / cantor_curve / user_curve"
        )
    pts = _as_points(points)
    if not pts:
        raise EmptyData("no curve points given")
    mats = np.array([p.maturity for p in pts])
    prices = np.array([p.price for p in pts])
    if np.any(np.diff(mats) <= 0):
        raise InvalidParameter("maturities must be strictly increasing")
    if mats[0] == 0.0:
        if prices[0] != 1.0:
            raise InvalidParameter(f"P(0,0) must equal 1, got {prices[0]}")
    else:
        mats = np.concatenate([[0.0], mats])
        prices = np.concatenate([[1.0], prices])
    if len(mats) < 2:
        raise EmptyData("curve needs at least one positive maturity")
    bad = np.nonzero(np.diff(prices) > 0)[0]
    if bad.size:
        i = bad[0]
        raise NonMonotoneData(
            f"price rises from {prices[i]} at T={mats[i]} to {prices[i + 1]} at T={mats[i + 1]}"
        )
    T_h = float(mats[-1])
    if horizon is not None and abs(horizon - T_h) > 1e-12 * max(1.0, T_h):
        raise HorizonMismatch(f"last maturity {T_h} differs from horizon {horizon}")

    log_p = np.log(prices)
    log_p[0] = 0.0
    log_h = float(log_p[-1])
    slopes = -np.diff(log_p) / np.diff(mats)  # density on each segment
    knots_arr = mats.copy()

    def log_price_fn(T):
        return np.interp(T, knots_arr, log_p)

    def nominal_fn(t):
        return np.interp(t, knots_arr, log_p) - log_h

    def density_fn(t):
        # right-continuous; the last segment also covers t == T_h
        idx = np.searchsorted(knots_arr, t, side="right") - 1
        idx = np.clip(idx, 0, len(slopes) - 1)
        return slopes[idx]

    return InitialCurve(
        horizon=T_h,
        scheme="loglinear",
        log_price_fn=log_price_fn,
        nominal_fn=nominal_fn,
        density_fn=density_fn,
        strict=bool(np.all(np.diff(prices) < 0)),
        knots=tuple(float(m) for m in mats),
        params={"maturities": mats.tolist(), "prices": prices.tolist()},
    )


def flat_curve(rate: float, horizon: float) -> InitialCurve:
    """``P(0, T) = exp(-rate T)``, built as a two-point log-linear curve."""
    if rate <= 0:
        raise InvalidParameter("flat rate must be positive for a strict curve")
    if horizon <= 0:
        raise InvalidParameter("horizon must be positive")
    return build_initial_curve([(0.0, 1.0), (horizon, math.exp(-rate * horizon))])


def power_law_curve(a: float, b: float, horizon: float) -> InitialCurve:
    """Curve with nominal forward curve ``F(t) = a (T_h - t)^b``.

    For ``b < 1`` the density ``a b (T_h - t)^(b-1)`` is integrable but
    unbounded at the horizon; the curve is flagged ``unbounded_density``.
    """
    if not a > 0 or not b > 0:
        raise InvalidParameter(f"power-law parameters must be positive, got a={a}, b={b}")
    if not horizon > 0:
        raise InvalidParameter("horizon must be positive")
    F0 = a * horizon**b

    def nominal_fn(t):
        return a * (horizon - t) ** b

    def log_price_fn(T):
        return a * (horizon - T) ** b - F0

    def density_fn(t):
        return a * b * (horizon - t) ** (b - 1.0)

    return InitialCurve(
        horizon=float(horizon),
        scheme="powerlaw",
        log_price_fn=log_price_fn,
        nominal_fn=nominal_fn,
        density_fn=density_fn,
        strict=True,
        unbounded_density=b < 1.0,
        params={"a": a, "b": b},
    )


def cantor_function(t: ArrayLike, depth: int = 24) -> ArrayLike:
    """Depth-``depth`` iterate of the standard Cantor-function construction.

    Each iterate is continuous, non-decreasing and within ``2**-depth`` of
    the Cantor function uniformly on ``[0, 1]``.
    """
    x = np.clip(np.asarray(t, dtype=float), 0.0, 1.0).copy()
    res = np.zeros_like(x)
    w = np.ones_like(x)
    for _ in range(depth):
        low = x < 1.0 / 3.0
        mid = (~low) & (x <= 2.0 / 3.0)
        high = x > 2.0 / 3.0
        res = np.where(mid | high, res + w / 2.0, res)
        x = np.where(low, 3.0 * x, np.where(high, 3.0 * x - 2.0, 0.0))
        w = np.where(mid, 0.0, w / 2.0)
    res = res + w * x
    return res if res.ndim else float(res)


def cantor_curve(depth: int = 24) -> InitialCurve:
    """Curve with ``F(t) = 1 - C(t)`` on ``[0, 1]``; admits no density."""
    if int(depth) != depth or depth < 1:
        raise InvalidParameter("depth must be a positive integer")
    depth = int(depth)

    def nominal_fn(t):
        return 1.0 - cantor_function(t, depth)

    def log_price_fn(T):
        return nominal_fn(T) - 1.0

    return InitialCurve(
        horizon=1.0,
        scheme="cantor",
        log_price_fn=lambda T: np.asarray(log_price_fn(T)),
        nominal_fn=lambda t: np.asarray(nominal_fn(t)),
        density_fn=None,
        strict=False,
        params={"depth": depth},
    )


def user_curve(
    price: Callable[[np.ndarray], np.ndarray],
    horizon: float,
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    check_points: int = 4097,
) -> InitialCurve:
    """Wrap a user price function ``T -> P(0, T)``.

    Monotonicity and ``P(0, 0) = 1`` are checked on a uniform grid of
    ``check_points`` nodes.
    """
    if not horizon > 0:
        raise InvalidParameter("horizon must be positive")
    grid = np.linspace(0.0, horizon, check_points)
    vals = np.asarray(price(grid), dtype=float)
    if abs(vals[0] - 1.0) > 1e-14:
        raise InvalidParameter("user curve must satisfy P(0,0) = 1")
    if np.any(vals <= 0):
        raise InvalidParameter("user curve prices must be positive")
    if np.any(np.diff(vals) > 0):
        raise NonMonotoneData("user curve is not non-increasing")
    log_h = float(np.log(price(np.asarray(horizon))))

    def log_price_fn(T):
        return np.log(np.asarray(price(T), dtype=float))

    return InitialCurve(
        horizon=float(horizon),
        scheme="user-table",
        log_price_fn=log_price_fn,
        nominal_fn=lambda t: log_price_fn(t) - log_h,
        density_fn=density,
        strict=bool(np.all(np.diff(vals) < 0)),
    )


def nominal_forward_curve(curve: InitialCurve) -> ForwardCurve:
    """Derive ``F(t) = log(P(0,t) / P(0,T_h))`` and its density if any."""
    return ForwardCurve(
        horizon=curve.horizon,
        F_fn=lambda t: np.asarray(curve.nominal_fn(t)),
        density_fn=curve.density_fn,
        knots=curve.knots,
        unbounded_density=curve.unbounded_density,
        strict=curve.strict,
    )


def read_curve_csv(path: Union[str, Path]) -> InitialCurve:
    """Read a ``maturity,price`` CSV into a log-linear curve."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != ["maturity", "price"]:
            raise InvalidParameter("curve CSV must have header 'maturity,price'")
        rows = [(float(r["maturity"]), float(r["price"])) for r in reader]
    return build_initial_curve(rows)
