"""
Trading strategies in finitely many bonds and their portfolio accounting.

Positions are piecewise constant on the path grid and change only at
events. Each event fires at the first grid node where its stopping rule
holds, and the rule only inspects path values up to that node. Gains are
left-endpoint Stieltjes sums

.. math::

    G(t_k) = \\sum_{j<k} \\sum_i \\theta_i(t_j)\\,(P(t_{j+1}, T_i) - P(t_j, T_i)),

and the discounted identity is checked against sums over discounted price
increments ``X_i = P(., T_i) / P(., T_h)``. The *discounted gains* used for
tameness are ``sum_j theta(t_j) . (X(t_{j+1}) - X(t_j))``, the gains counted
in units of the long bond. Unlike ``G / P(t, T_h)`` this is a local
martingale, and for long-only positions it is bounded below by minus the
initial discounted value.

After the close-out time ``T_theta`` all positions are zero;
the portfolio value is carried forward in long bonds, so its discounted
value stays constant.

A bond held to its maturity is rolled into the long bond at maturity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .bonds import log_bond_path, log_long_bond_path
from .errors import (
    BadMaturityOrder,
    InvalidParameter,
    MaturityNotInModel,
    OffGridTime,
    PrerequisiteFailed,
)
from .montecarlo import RunningStats
from .paths import ModelParams, PathState, TimeGrid, iter_path_blocks, y_values

__all__ = [
    "AtTime",
    "LevelCrossing",
    "Never",
    "FirstOf",
    "Roll",
    "Inject",
    "Event",
    "Strategy",
    "Ensemble",
    "PortfolioReport",
    "TamenessVerdict",
    "SupermartingaleReport",
    "evaluate",
    "gains_process",
    "self_financing_residual",
    "tameness_check",
    "supermartingale_test",
    "no_arbitrage_check",
    "roll_example",
    "bundled_strategies",
    "load_strategy",
    "strategy_from_dict",
]


# ---------------------------------------------------------------------------
# stopping rules; hit_index returns the firing node per path, n_nodes if never


@dataclass(frozen=True)
class AtTime:
    t: float

    def hit_index(self, params: ModelParams, path: PathState) -> np.ndarray:
        try:
            k = path.grid.index(self.t)
        except OffGridTime:
            if self.t > path.grid.end:
                k = path.grid.n_steps + 1
            else:
                raise
        return np.full(_rows(path), k)


@dataclass(frozen=True)
class LevelCrossing:
    """First node where ``log(P(t, maturity) / P(t, T_h)) >= level``."""

    maturity: float
    level: float

    def hit_index(self, params: ModelParams, path: PathState) -> np.ndarray:
        y = y_values(params.forward.F(self.maturity), path.M, path.A, path.sigma)
        above = np.atleast_2d(y >= self.level)
        return np.where(above.any(axis=1), above.argmax(axis=1), path.grid.n_steps + 1)


@dataclass(frozen=True)
class Never:
    def hit_index(self, params: ModelParams, path: PathState) -> np.ndarray:
        return np.full(_rows(path), path.grid.n_steps + 1)


@dataclass(frozen=True)
class FirstOf:
    rules: tuple

    def hit_index(self, params: ModelParams, path: PathState) -> np.ndarray:
        return np.min([r.hit_index(params, path) for r in self.rules], axis=0)


def _rows(path: PathState) -> int:
    return path.n_paths


# ---------------------------------------------------------------------------
# actions


@dataclass(frozen=True)
class Roll:
    """Sell every unit of ``src`` and buy ``dst`` bonds with the proceeds."""

    src: float
    dst: float


@dataclass(frozen=True)
class Inject:
    """Add ``amount`` of money, invested in ``dst``. Not self-financing."""

    amount: float
    dst: float


@dataclass(frozen=True)
class Event:
    rule: object
    action: object


@dataclass(frozen=True)
class Strategy:
    """Positions in bonds with ``maturities`` (the last one is ``T_h``).

    ``initial`` holds the units bought at time 0. ``close_out`` sets
    ``T_theta``. ``bound`` is the declared lower bound for the discounted
    gains used by the tameness check; ``None`` declares no bound.
    """

    maturities: tuple
    initial: tuple
    events: tuple = ()
    close_out: object = field(default_factory=Never)
    bound: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        mats = tuple(float(m) for m in self.maturities)
        if len(mats) != len(self.initial):
            raise InvalidParameter("one initial position per maturity is required")
        if any(b <= a for a, b in zip(mats, mats[1:])):
            raise BadMaturityOrder("maturities must be strictly increasing")
        object.__setattr__(self, "maturities", mats)
        object.__setattr__(self, "initial", tuple(float(x) for x in self.initial))
        object.__setattr__(self, "events", tuple(self.events))

    def asset(self, maturity: float) -> int:
        for i, m in enumerate(self.maturities):
            if abs(m - maturity) <= 1e-12 * max(1.0, m):
                return i
        raise MaturityNotInModel(f"maturity {maturity} is not traded by this strategy")

    def endowment(self, params: ModelParams) -> float:
        return float(np.dot(self.initial, params.curve.price(np.array(self.maturities))))


@dataclass(frozen=True, eq=False)
class PortfolioReport:
    """Per-node series, shaped like the path arrays.

    ``discounted_gains`` is the sum of positions against discounted price
    increments; it stops moving at the close-out node.
    """

    times: np.ndarray
    positions: np.ndarray
    gains: np.ndarray
    portfolio_value: np.ndarray
    discounted_value: np.ndarray
    discounted_gains: np.ndarray
    residual: np.ndarray
    close_index: np.ndarray

    @property
    def self_financing_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def tame_bound(self) -> float:
        return float(np.min(self.discounted_gains))


# ---------------------------------------------------------------------------
# engine


def _check_model(strategy: Strategy, params: ModelParams, grid: TimeGrid) -> None:
    if abs(strategy.maturities[-1] - params.horizon) > 1e-12 * params.horizon:
        raise MaturityNotInModel("the last maturity must be the horizon T_h")
    for m in strategy.maturities[:-1]:
        if m > params.horizon:
            raise MaturityNotInModel(f"maturity {m} beyond the horizon")
        if m <= grid.end:
            try:
                grid.index(m)
            except OffGridTime:
                raise MaturityNotInModel(f"maturity {m} is not a grid node") from None


def _price_arrays(strategy: Strategy, params: ModelParams, path: PathState):
    """Prices per asset with shape (n_assets, n_paths, n_nodes); matured bonds read 1."""
    log_h = np.atleast_2d(log_long_bond_path(params, path))
    prices = []
    for m in strategy.maturities[:-1]:
        lp = np.atleast_2d(log_bond_path(params, path, m))
        prices.append(np.exp(np.nan_to_num(lp, nan=0.0)))
    prices.append(np.exp(log_h))
    return np.stack(prices)


def _event_list(strategy: Strategy, params: ModelParams, path: PathState):
    """(index array, priority, kind, payload) for every event including maturity rolls."""
    n_nodes = path.grid.n_steps + 1
    out = []
    for e in strategy.events:
        out.append((e.rule.hit_index(params, path), 0, "action", e.action))
    h = len(strategy.maturities) - 1
    for i, m in enumerate(strategy.maturities[:-1]):
        k = path.grid.index(m) if m <= path.grid.end else n_nodes
        out.append((np.full(_rows(path), k), 1, "action", Roll(m, strategy.maturities[h])))
    return out


def evaluate(strategy: Strategy, params: ModelParams, path: PathState) -> PortfolioReport:
    """Run ``strategy`` along ``path`` (single path or ensemble)."""
    _check_model(strategy, params, path.grid)
    P = _price_arrays(strategy, params, path)  # (n_assets, n_paths, n_nodes)
    n_assets, n_paths, n_nodes = P.shape
    nodes = np.arange(n_nodes)
    rows = np.arange(n_paths)
    theta = np.broadcast_to(np.array(strategy.initial)[:, None, None], P.shape).copy()

    close = np.atleast_1d(strategy.close_out.hit_index(params, path))
    pending = _event_list(strategy, params, path)
    done = [np.zeros(n_paths, dtype=bool) for _ in pending]
    for _ in range(len(pending)):
        keys = np.stack(
            [np.where(d, np.iinfo(np.int64).max, ev[0] * 2 + ev[1]) for ev, d in zip(pending, done)]
        )
        choice = keys.argmin(axis=0)
        for j, (idx, _, _, action) in enumerate(pending):
            sel = (choice == j) & ~done[j] & (idx < n_nodes) & (idx < close)
            done[j] |= choice == j
            if not sel.any():
                continue
            r, k = rows[sel], idx[sel]
            now = theta[:, r, k]  # holdings just before the trade
            price = P[:, r, k]
            new = now.copy()
            if isinstance(action, Roll):
                s, d = strategy.asset(action.src), strategy.asset(action.dst)
                new[d] += now[s] * price[s] / price[d]
                new[s] = 0.0
            elif isinstance(action, Inject):
                d = strategy.asset(action.dst)
                new[d] += action.amount / price[d]
            else:
                raise InvalidParameter(f"unknown action {action!r}")
            after = nodes[None, :] >= k[:, None]
            theta[:, r, :] = np.where(after[None], new[:, :, None], theta[:, r, :])
    closed_after = nodes[None, :] >= close[:, None]
    theta[:, closed_after] = 0.0

    P_h = P[-1]
    X = P / P_h
    dP = np.diff(P, axis=-1)
    dX = np.diff(X, axis=-1)
    zero = np.zeros((n_paths, 1))
    G = np.concatenate([zero, np.cumsum(np.einsum("apk,apk->pk", theta[..., :-1], dP), axis=-1)], axis=-1)
    I = np.concatenate([zero, np.cumsum(np.einsum("apk,apk->pk", theta[..., :-1], dX), axis=-1)], axis=-1)

    value = np.einsum("apk,apk->pk", theta, P)
    # at and after close-out the value sits in long bonds: discounted value frozen
    k_c = np.minimum(close, n_nodes - 1)
    pre_close = np.einsum("ap,ap->p", theta[:, rows, np.maximum(k_c - 1, 0)], P[:, rows, k_c])
    pre_close = np.where(k_c == 0, np.einsum("a,ap->p", np.array(strategy.initial), P[:, :, 0]), pre_close)
    held = pre_close / P_h[rows, k_c]
    value = np.where(closed_after, held[:, None] * P_h, value)
    disc = np.where(closed_after, held[:, None], value / P_h)
    residual = disc - disc[:, :1] - I

    squeeze = path.B.ndim == 1
    pick = (lambda a: a[0]) if squeeze else (lambda a: a)
    return PortfolioReport(
        times=path.grid.times,
        positions=theta[:, 0] if squeeze else theta,
        gains=pick(G),
        portfolio_value=pick(value),
        discounted_value=pick(disc),
        discounted_gains=pick(I),
        residual=pick(residual),
        close_index=pick(close),
    )


def gains_process(strategy: Strategy, params: ModelParams, path: PathState) -> np.ndarray:
    return evaluate(strategy, params, path).gains


def self_financing_residual(strategy: Strategy, params: ModelParams, path: PathState) -> np.ndarray:
    """``Pi/P_h - Pi_0/P_h(0) - sum theta dX`` per node; zero for self-financing trades."""
    return evaluate(strategy, params, path).residual


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class Ensemble:
    """Streamed path ensemble: ``n_paths`` paths on ``grid`` for ``seed``."""

    grid: TimeGrid
    n_paths: int
    seed: int

    def blocks(self, sigma: float) -> Iterator[PathState]:
        return iter_path_blocks(sigma, self.grid, self.n_paths, self.seed)


def _path_blocks(paths: Union[PathState, Ensemble], params: ModelParams) -> Iterable[PathState]:
    if isinstance(paths, Ensemble):
        return paths.blocks(params.sigma)
    if paths.B.ndim == 1:
        return [PathState(paths.grid, paths.sigma, paths.B[None], paths.M[None], paths.A[None])]
    return [paths]


@dataclass(frozen=True)
class TamenessVerdict:
    tame: bool
    infimum: float
    bound: Optional[float]
    witness: Optional[int] = None

    def __bool__(self):
        return self.tame


def tameness_check(
    strategy: Strategy, params: ModelParams, paths: Union[PathState, Ensemble]
) -> TamenessVerdict:
    """Search the ensemble for a path whose stopped discounted gains fall below the bound.

    Passing is evidence only: a finite ensemble cannot prove a bound.
    """
    bound = strategy.bound
    worst, witness, offset = math.inf, None, 0
    for block in _path_blocks(paths, params):
        dg = evaluate(strategy, params, block).discounted_gains
        per_path = np.atleast_2d(dg).min(axis=1)
        i = int(per_path.argmin())
        if per_path[i] < worst:
            worst = float(per_path[i])
            if bound is not None and worst < bound:
                witness = offset + i
        offset += per_path.size
    tame = bound is not None and worst >= bound
    return TamenessVerdict(tame, worst, bound, None if tame else witness)


@dataclass(frozen=True)
class SupermartingaleReport:
    checkpoints: tuple
    means: tuple
    stderrs: tuple
    increments: tuple
    increment_stderrs: tuple
    initial: float
    passed: bool
    self_financing_residual: float


def _checkpoint_indices(grid: TimeGrid, checkpoints: Sequence[float]) -> list:
    return [grid.index(t) for t in checkpoints]


def supermartingale_test(
    strategy: Strategy,
    params: ModelParams,
    paths: Union[PathState, Ensemble],
    checkpoints: Sequence[float],
    k: float = 3.0,
    residual_tol: float = 1e-10,
) -> SupermartingaleReport:
    """Check ``E[V(t)] <= E[V(s)] + k * stderr`` for consecutive checkpoints ``s < t``.

    ``V`` is the discounted portfolio value. The strategy must be tame and
    self-financing on the same ensemble, otherwise :class:`PrerequisiteFailed`.
    The stderr is that of the paired difference ``V(t) - V(s)``.
    """
    checkpoints = tuple(sorted(checkpoints))
    verdict = tameness_check(strategy, params, paths)
    if not verdict.tame:
        raise PrerequisiteFailed(f"strategy is not tame (infimum {verdict.infimum:.4g})")
    grid = paths.grid
    idx = _checkpoint_indices(grid, checkpoints)
    levels = [RunningStats() for _ in idx]
    diffs = [RunningStats() for _ in idx[1:]]
    worst_res = 0.0
    for block in _path_blocks(paths, params):
        rep = evaluate(strategy, params, block)
        worst_res = max(worst_res, float(np.max(np.abs(rep.residual))))
        v = np.atleast_2d(rep.discounted_value)
        for st, i in zip(levels, idx):
            st.add(v[:, i])
        for st, (a, b) in zip(diffs, zip(idx, idx[1:])):
            st.add(v[:, b] - v[:, a])
    if worst_res > residual_tol:
        raise PrerequisiteFailed(f"strategy is not self-financing (residual {worst_res:.3g})")
    lev = [s.estimate() for s in levels]
    inc = [s.estimate() for s in diffs]
    passed = all(e.mean <= k * e.stderr for e in inc)
    initial = strategy.endowment(params) / params.curve.long_bond_price
    return SupermartingaleReport(
        checkpoints,
        tuple(e.mean for e in lev),
        tuple(e.stderr for e in lev),
        tuple(e.mean for e in inc),
        tuple(e.stderr for e in inc),
        initial,
        passed,
        worst_res,
    )


def no_arbitrage_check(
    strategy: Strategy, params: ModelParams, paths: Union[PathState, Ensemble], k: float = 3.0
) -> dict:
    """Terminal discounted value of a zero-endowment strategy: mean <= k * stderr."""
    stats = RunningStats()
    for block in _path_blocks(paths, params):
        v = np.atleast_2d(evaluate(strategy, params, block).discounted_value)
        stats.add(v[:, -1])
    est = stats.estimate()
    return {
        "name": strategy.name,
        "endowment": strategy.endowment(params),
        "mean": est.mean,
        "stderr": est.stderr,
        "n": est.n_paths,
        "passed": est.mean <= k * est.stderr,
    }


# ---------------------------------------------------------------------------
# built-in strategies


def _as_rule(rule):
    return AtTime(float(rule)) if isinstance(rule, (int, float)) else rule


def roll_example(
    params: ModelParams,
    T1: float,
    T2: float,
    a: float,
    b: float,
    sigma1: object,
    sigma2: object,
    level: Optional[float] = None,
    fund_with_long_bond: bool = False,
) -> Strategy:
    """Hold ``a`` units of the ``T1`` bond and ``b`` of the ``T2`` bond.

    At ``sigma1`` the ``T1`` position is rolled into ``T2``; everything is
    closed at ``sigma2``. Both rules are capped so that ``sigma_i <= T_i``.
    With ``level`` trading also stops at the first time
    ``log(P(t,T1)/P(t,T_h)) >= level``, which makes any signs of ``a, b``
    tame. ``fund_with_long_bond`` shorts long bonds for a zero endowment.
    """
    T_h = params.horizon
    if not 0 < T1 < T2 < T_h:
        raise BadMaturityOrder("need 0 < T1 < T2 < T_h")
    sigma1 = FirstOf((_as_rule(sigma1), AtTime(T1)))
    sigma2 = FirstOf((_as_rule(sigma2), AtTime(T2)))
    close = sigma2 if level is None else FirstOf((sigma2, LevelCrossing(T1, level)))
    P0 = params.curve.price(np.array([T1, T2]))
    short = -(a * P0[0] + b * P0[1]) / params.curve.long_bond_price if fund_with_long_bond else 0.0
    if a >= 0 and b >= 0:
        bound = -(a + b) * math.exp(float(params.forward.F(0.0)))
    elif level is not None:
        # stopped discounted prices stay below exp(level), up to one step of overshoot;
        # the rolled position holds at most |a| exp(level) units of T2
        cap = math.exp(level + 1.0)
        bound = -(abs(a) * cap + abs(b)) * cap
    else:
        bound = -(abs(a) + abs(b)) * math.exp(float(params.forward.F(0.0)))
    return Strategy(
        maturities=(T1, T2, T_h),
        initial=(a, b, short),
        events=(Event(sigma1, Roll(T1, T2)),),
        close_out=close,
        bound=bound,
        name="roll_example",
    )


def bundled_strategies(params: ModelParams, T: float = 1.0, level: float = 5.0) -> list:
    """Zero-endowment strategies used by the no-arbitrage smoke test."""
    T_h = params.horizon
    if not 0 < T < T_h:
        raise BadMaturityOrder("need 0 < T < T_h")
    Ph = params.curve.long_bond_price
    PT = float(params.curve.price(T))
    F_T = float(params.forward.F(T))
    ratio = PT / Ph
    T2 = min(2.0 * T, 0.5 * (T + T_h))
    P2 = float(params.curve.price(T2))
    carry = Strategy(
        maturities=(T, T_h),
        initial=(1.0, -ratio),
        close_out=AtTime(T),
        bound=-math.exp(F_T),
        name="long_bond_financed_T_bond",
    )
    fwd_long = Strategy(
        maturities=(T, T_h),
        initial=(-1.0 / ratio, 1.0),
        close_out=FirstOf((AtTime(T), LevelCrossing(T, level))),
        bound=-math.exp(level + 1.0) / ratio,
        name="long_bond_forward_stopped",
    )
    fwd_short = Strategy(
        maturities=(T, T2, T_h),
        initial=(-P2 / PT, 1.0, 0.0),
        close_out=FirstOf((AtTime(T), LevelCrossing(T, level))),
        bound=-math.exp(level + 1.0) * P2 / PT,
        name="bond_forward_stopped",
    )
    roll = roll_example(
        params, T, T2, a=1.0, b=0.5, sigma1=T, sigma2=T2, level=level, fund_with_long_bond=True
    )
    roll = Strategy(
        roll.maturities, roll.initial, roll.events, roll.close_out, roll.bound, "roll_funded_stopped"
    )
    return [carry, fwd_long, fwd_short, roll]


# ---------------------------------------------------------------------------
# JSON strategy files


def _rule_from_dict(d: dict):
    kind = d["rule"]
    if kind == "time":
        return AtTime(float(d["t"]))
    if kind == "level":
        return LevelCrossing(float(d["maturity"]), float(d["level"]))
    if kind == "never":
        return Never()
    if kind == "first_of":
        return FirstOf(tuple(_rule_from_dict(r) for r in d["rules"]))
    raise InvalidParameter(f"unknown stopping rule {kind!r}")


def _action_from_dict(d: dict):
    kind = d["action"]
    if kind == "roll":
        return Roll(float(d["src"]), float(d["dst"]))
    if kind == "inject":
        return Inject(float(d["amount"]), float(d["dst"]))
    raise InvalidParameter(f"unknown action {kind!r}")


def strategy_from_dict(d: dict) -> Strategy:
    """Build a strategy from its JSON description.

    Keys: ``maturities``, ``initial``, optional ``events`` (each with a
    ``when`` stopping rule and an ``action``), ``close_out``, ``bound``, ``name``.
    """
    try:
        return Strategy(
            maturities=tuple(d["maturities"]),
            initial=tuple(d["initial"]),
            events=tuple(
                Event(_rule_from_dict(e["when"]), _action_from_dict(e)) for e in d.get("events", [])
            ),
            close_out=_rule_from_dict(d["close_out"]) if "close_out" in d else Never(),
            bound=d.get("bound"),
            name=d.get("name", ""),
        )
    except KeyError as exc:
        raise InvalidParameter(f"strategy description lacks {exc}") from None


def load_strategy(path: Union[str, Path]) -> Strategy:
    with open(path) as fh:
        return strategy_from_dict(json.load(fh))
