import json
import math

import numpy as np
import pytest

from longbond import ModelParams, flat_curve
from longbond.bonds import bond_price, long_bond_price
from longbond.errors import (
    BadMaturityOrder,
    InvalidParameter,
    MaturityNotInModel,
    PrerequisiteFailed,
)
from longbond.paths import TimeGrid, simulate_path, simulate_paths
from longbond.strategies import (
    AtTime,
    Ensemble,
    Event,
    FirstOf,
    Inject,
    LevelCrossing,
    Never,
    Roll,
    Strategy,
    bundled_strategies,
    evaluate,
    gains_process,
    load_strategy,
    no_arbitrage_check,
    roll_example,
    self_financing_residual,
    supermartingale_test,
    tameness_check,
)

GRID = TimeGrid.uniform(3.0, 2**-7)


def price_series(params, path, T):
    return np.array([bond_price(params, path, float(t), T) if t <= T else np.nan for t in path.grid.times])


class TestGains:
    def test_zero_strategy(self, flat):
        p = simulate_path(flat, GRID, seed=1)
        s = Strategy((2.0, 10.0), (0.0, 0.0))
        assert np.all(gains_process(s, flat, p) == 0.0)

    def test_buy_and_hold_long_bond(self, flat):
        g = TimeGrid.uniform(10.0, 2**-5)
        p = simulate_path(flat, g, seed=2)
        G = gains_process(Strategy((10.0,), (1.0,)), flat, p)
        assert G[0] == 0.0
        assert G[-1] == pytest.approx(1 - flat.curve.long_bond_price, abs=1e-13)

    def test_roll_closed_form(self, flat):
        """G(t) from the closed form, including the initial-price constants."""
        a, b, T1, T2 = 1.5, -0.7, 1.0, 2.0
        s = roll_example(flat, T1, T2, a, b, sigma1=LevelCrossing(T1, 0.55), sigma2=2.5)
        for seed in range(5):
            p = simulate_path(flat, GRID, seed=seed)
            G = gains_process(s, flat, p)
            k1 = min(int(s.events[0].rule.hit_index(flat, p)[0]), GRID.index(T1))
            k2 = GRID.index(T2)  # the T2 bond matures before sigma2 = 2.5
            P1 = price_series(flat, p, T1)
            P2 = price_series(flat, p, T2)
            ratio = P1[k1] / P2[k1]
            for k in range(0, k2 + 1, 5):
                i1, i2 = min(k, k1), min(k, k2)
                expect = (
                    a * (P1[i1] - P1[0])
                    + b * (P2[i2] - P2[0])
                    + a * ratio * (P2[i2] - P2[i1])
                )
                assert G[k] == pytest.approx(expect, abs=1e-10)

    def test_linearity(self, flat):
        p = simulate_path(flat, GRID, seed=4)
        s1 = Strategy((1.0, 2.0, 10.0), (1.0, 0.0, -0.5), close_out=AtTime(2.5))
        s2 = Strategy((1.0, 2.0, 10.0), (0.0, 2.0, 0.25), close_out=AtTime(2.5))
        s12 = Strategy((1.0, 2.0, 10.0), (1.0, 2.0, -0.25), close_out=AtTime(2.5))
        np.testing.assert_allclose(
            gains_process(s12, flat, p), gains_process(s1, flat, p) + gains_process(s2, flat, p), atol=1e-13
        )

    def test_unknown_maturity(self, flat):
        p = simulate_path(flat, GRID, seed=0)
        with pytest.raises(MaturityNotInModel):
            evaluate(Strategy((1.0, 9.0), (1.0, 0.0)), flat, p)
        with pytest.raises(MaturityNotInModel):
            evaluate(Strategy((1.001, 10.0), (1.0, 0.0)), flat, p)
        with pytest.raises(BadMaturityOrder):
            Strategy((2.0, 1.0), (1.0, 1.0))

    def test_positions_zero_after_maturity_and_close(self, flat):
        p = simulate_path(flat, GRID, seed=5)
        rep = evaluate(roll_example(flat, 1.0, 2.0, 1.0, 1.0, sigma1=0.5, sigma2=1.5), flat, p)
        k1, k15 = GRID.index(1.0), GRID.index(1.5)
        assert np.all(rep.positions[0, GRID.index(0.5):] == 0)
        assert np.all(rep.positions[:, k15:] == 0)
        assert rep.positions[1, k1 - 1] > 1.0


class TestSelfFinancing:
    def test_buy_and_hold(self, flat):
        p = simulate_paths(flat, GRID, 20, seed=6)
        res = self_financing_residual(Strategy((2.0, 10.0), (1.0, 0.0)), flat, p)
        assert np.max(np.abs(res)) <= 1e-12

    def test_rolls_preserve_value(self, flat):
        p = simulate_paths(flat, GRID, 20, seed=7)
        s = roll_example(flat, 1.0, 2.0, 1.0, 0.5, sigma1=LevelCrossing(1.0, 0.6), sigma2=2.0)
        res = self_financing_residual(s, flat, p)
        assert np.max(np.abs(res)) <= 1e-12

    def test_cash_injection_detected(self, flat):
        p = simulate_path(flat, GRID, seed=8)
        s = Strategy((2.0, 10.0), (1.0, 0.0), events=(Event(AtTime(1.0), Inject(0.3, 10.0)),))
        res = self_financing_residual(s, flat, p)
        k = GRID.index(1.0)
        assert np.max(np.abs(res[:k])) <= 1e-12
        jump = 0.3 / long_bond_price(flat, p, 1.0)
        np.testing.assert_allclose(res[k:], jump, rtol=1e-10)

    def test_discounted_value_constant_after_close(self, flat):
        p = simulate_path(flat, GRID, seed=9)
        rep = evaluate(roll_example(flat, 1.0, 2.0, 1.0, 0.5, sigma1=0.5, sigma2=1.5), flat, p)
        k = GRID.index(1.5)
        assert np.ptp(rep.discounted_value[k:]) == 0.0
        assert np.all(np.diff(rep.gains[k:]) == 0.0)

    def test_matured_bond_rolls_into_long_bond(self, flat):
        p = simulate_path(flat, GRID, seed=10)
        rep = evaluate(Strategy((1.0, 10.0), (2.0, 0.0)), flat, p)
        k = GRID.index(1.0)
        assert rep.positions[0, k] == 0.0
        assert rep.positions[1, k] == pytest.approx(2.0 / long_bond_price(flat, p, 1.0), rel=1e-14)
        assert np.max(np.abs(rep.residual)) <= 1e-12


class TestTameness:
    def test_long_only_stopped(self, flat):
        s = roll_example(flat, 1.0, 2.0, 1.0, 0.5, sigma1=1.0, sigma2=2.0, level=2.0)
        assert s.bound == pytest.approx(-1.5 * math.exp(0.5))
        verdict = tameness_check(s, flat, Ensemble(GRID, 2000, seed=1))
        assert verdict.tame and verdict.witness is None

    def test_constant_short_has_witness(self):
        params = ModelParams(1.0, flat_curve(0.3, 10.0))
        g = TimeGrid.uniform(5.0, 2**-6)
        s = roll_example(params, 4.0, 4.5, -1.0, 0.0, sigma1=4.0, sigma2=4.5)
        verdict = tameness_check(s, params, Ensemble(g, 5000, seed=2))
        assert not verdict.tame
        assert verdict.witness is not None
        bad = simulate_path(params, g, seed=2, index=verdict.witness)
        assert evaluate(s, params, bad).tame_bound < s.bound

    def test_same_short_with_level_cap(self):
        params = ModelParams(1.0, flat_curve(0.3, 10.0))
        g = TimeGrid.uniform(5.0, 2**-6)
        s = roll_example(params, 4.0, 4.5, -1.0, 0.0, sigma1=4.0, sigma2=4.5, level=2.0)
        verdict = tameness_check(s, params, Ensemble(g, 5000, seed=2))
        assert verdict.tame

    def test_no_bound_declared(self, flat):
        s = Strategy((2.0, 10.0), (1.0, 0.0))
        assert not tameness_check(s, flat, simulate_path(flat, GRID, seed=0)).tame


class TestSupermartingale:
    def test_zero_strategy(self, flat):
        s = Strategy((2.0, 10.0), (0.0, 0.0), bound=0.0)
        rep = supermartingale_test(s, flat, Ensemble(GRID, 10_000, seed=3), [0.0, 1.0, 3.0])
        assert rep.means == (0.0, 0.0, 0.0)
        assert rep.passed

    def test_buy_and_hold_non_increasing(self):
        params = ModelParams(1.0, flat_curve(0.2, 10.0))
        g = TimeGrid.uniform(5.0, 2**-6)
        s = Strategy((5.0, 10.0), (1.0, 0.0), bound=-math.exp(params.forward.F(0.0)))
        rep = supermartingale_test(s, params, Ensemble(g, 10_000, seed=4), [0.0, 2.5, 5.0])
        assert rep.passed
        assert rep.means[0] == pytest.approx(math.exp(1.0), rel=1e-14)

    def test_level_capped_means_equal(self, flat):
        s = roll_example(flat, 1.0, 2.0, 1.0, 0.5, sigma1=1.0, sigma2=2.0, level=1.0)
        rep = supermartingale_test(s, flat, Ensemble(GRID, 10_000, seed=5), [0.0, 1.0, 2.0, 3.0])
        assert rep.passed
        for inc, se in zip(rep.increments, rep.increment_stderrs):
            assert abs(inc) <= 3 * se

    def test_prerequisites(self, flat):
        untame = Strategy((2.0, 10.0), (1.0, 0.0))
        with pytest.raises(PrerequisiteFailed):
            supermartingale_test(untame, flat, Ensemble(GRID, 100, seed=0), [0.0, 1.0])
        leaky = Strategy(
            (2.0, 10.0), (1.0, 0.0), events=(Event(AtTime(1.0), Inject(0.3, 10.0)),), bound=-10.0
        )
        with pytest.raises(PrerequisiteFailed):
            supermartingale_test(leaky, flat, Ensemble(GRID, 100, seed=0), [0.0, 1.0])


class TestBundled:
    def test_zero_endowment(self, flat):
        for s in bundled_strategies(flat):
            assert abs(s.endowment(flat)) < 1e-14
            assert s.bound is not None

    def test_no_arbitrage_small(self, flat):
        ens = Ensemble(TimeGrid.uniform(2.0, 2**-6), 5000, seed=11)
        for s in bundled_strategies(flat):
            out = no_arbitrage_check(s, flat, ens)
            assert out["passed"], out


class TestStrategyFile:
    def test_roundtrip(self, tmp_path, flat):
        doc = {
            "name": "roll",
            "maturities": [1.0, 2.0, 10.0],
            "initial": [1.0, 0.5, 0.0],
            "events": [{"when": {"rule": "level", "maturity": 1.0, "level": 0.6}, "action": "roll", "src": 1.0, "dst": 2.0}],
            "close_out": {"rule": "first_of", "rules": [{"rule": "time", "t": 2.0}, {"rule": "never"}]},
            "bound": -2.0,
        }
        f = tmp_path / "s.json"
        f.write_text(json.dumps(doc))
        s = load_strategy(f)
        assert s.events[0] == Event(LevelCrossing(1.0, 0.6), Roll(1.0, 2.0))
        assert s.close_out == FirstOf((AtTime(2.0), Never()))
        ref = roll_example(flat, 1.0, 2.0, 1.0, 0.5, sigma1=LevelCrossing(1.0, 0.6), sigma2=2.0)
        p = simulate_path(flat, GRID, seed=3)
        np.testing.assert_allclose(gains_process(s, flat, p), gains_process(ref, flat, p), atol=1e-15)

    def test_bad_file(self, tmp_path):
        f = tmp_path / "s.json"
        f.write_text(json.dumps({"maturities": [10.0]}))
        with pytest.raises(InvalidParameter):
            load_strategy(f)
        f.write_text(json.dumps({"maturities": [10.0], "initial": [1.0], "close_out": {"rule": "moon"}}))
        with pytest.raises(InvalidParameter):
            load_strategy(f)
