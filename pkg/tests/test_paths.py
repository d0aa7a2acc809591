import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longbond import ModelParams, flat_curve
from longbond.errors import InvalidParameter, NonPositiveInitial, OffGridTime
from longbond.montecarlo import BLOCK_SIZE, MCEstimate, RunningStats, blocks, ordered_map
from longbond.paths import (
    PathState,
    TimeGrid,
    coarsen,
    iter_path_blocks,
    path_from_increments,
    simulate_path,
    simulate_paths,
    stopping_time_level,
    terminal_from_increments,
    y_process,
    y_process_exploding,
    y_values,
)

from conftest import node_path


def deterministic_path(end, step, sigma=1.0):
    """The sigma -> 0 limit: M = 1, A = t."""
    grid = TimeGrid.uniform(end, step)
    ones = np.ones(grid.n_steps + 1)
    return PathState(grid, sigma, np.zeros_like(ones), ones, grid.times.copy())


class TestRunningStats:
    def test_merge_matches_numpy(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=1000)
        a = RunningStats().add(x[:317]).merge(RunningStats().add(x[317:]))
        assert a.mean == pytest.approx(x.mean(), rel=1e-13)
        assert a.variance == pytest.approx(x.var(ddof=1), rel=1e-12)

    def test_estimate(self):
        est = RunningStats().add(np.array([1.0, 3.0])).estimate(seed=5)
        assert est.mean == 2.0
        assert est.stderr == pytest.approx(1.0)
        assert est.seed == 5
        assert MCEstimate(1.0, 0.0, 10).z_score(1.0) == 0.0

    def test_blocks_cover(self):
        sizes = [n for _, n in blocks(1000)]
        assert sum(sizes) == 1000
        assert max(sizes) == BLOCK_SIZE

    def test_ordered_map_threads(self):
        out = ordered_map(lambda k, n: k * n, list(blocks(2000)), threads=4)
        assert out == [k * n for k, n in blocks(2000)]


class TestTimeGrid:
    def test_uniform_ends_exactly(self):
        g = TimeGrid.uniform(5.0, 2**-10)
        assert g.end == 5.0
        assert g.n_steps == 5 * 1024
        assert g.index(2.5) == 2560

    def test_ragged_last_step(self):
        g = TimeGrid.uniform(1.0, 0.3)
        assert g.times[-1] == 1.0
        assert g.dt[-1] == pytest.approx(0.1)

    def test_off_grid(self):
        with pytest.raises(OffGridTime):
            TimeGrid.uniform(1.0, 0.25).index(0.3)

    def test_rejects_bad_nodes(self):
        with pytest.raises(InvalidParameter):
            TimeGrid(np.array([0.0, 0.5, 0.5]), 0.5)


class TestSimulation:
    def test_initial_condition(self):
        p = simulate_path(1.0, TimeGrid.uniform(1.0, 2**-6), seed=11)
        assert (p.B[0], p.M[0], p.A[0]) == (0.0, 1.0, 0.0)

    def test_small_sigma_limit(self):
        g = TimeGrid.uniform(2.0, 2**-8)
        p = simulate_path(1e-8, g, seed=1)
        np.testing.assert_allclose(p.M, 1.0, atol=1e-6)
        np.testing.assert_allclose(p.A, g.times, atol=1e-6)

    def test_path_independent_of_ensemble_size(self):
        g = TimeGrid.uniform(1.0, 2**-5)
        big = simulate_paths(1.0, g, 700, seed=9)
        one = simulate_path(1.0, g, seed=9, index=611)
        np.testing.assert_array_equal(big.B[611], one.B)

    def test_seeds_differ(self):
        g = TimeGrid.uniform(1.0, 2**-5)
        assert not np.allclose(simulate_path(1.0, g, 1).B, simulate_path(1.0, g, 2).B)

    def test_streaming_equals_in_memory(self):
        g = TimeGrid.uniform(1.0, 2**-5)
        whole = simulate_paths(1.0, g, 600, seed=4)
        streamed = np.concatenate([b.A for b in iter_path_blocks(1.0, g, 600, 4)])
        np.testing.assert_array_equal(whole.A, streamed)

    def test_terminal_kernel_matches_full_path(self):
        g = TimeGrid.uniform(1.5, 2**-7)
        dB = np.random.default_rng(0).normal(scale=math.sqrt(2**-7), size=(50, g.n_steps))
        full = path_from_increments(g, 0.7, dB)
        M_T, A_T = terminal_from_increments(g, 0.7, dB)
        np.testing.assert_allclose(M_T, full.M[:, -1], rtol=1e-13)
        np.testing.assert_allclose(A_T, full.A[:, -1], rtol=1e-13)

    def test_terminal_kernel_ragged_grid(self):
        g = TimeGrid(np.array([0.0, 0.1, 0.35, 0.5, 1.0]), 0.25)
        dB = np.random.default_rng(1).normal(size=(7, 4)) * np.sqrt(g.dt)
        full = path_from_increments(g, 1.0, dB)
        M_T, A_T = terminal_from_increments(g, 1.0, dB)
        np.testing.assert_allclose(A_T, full.A[:, -1], rtol=1e-13)

    def test_gbm_martingale(self):
        """E[M_1] = 1 over 10^5 paths."""
        g = TimeGrid.uniform(1.0, 2**-4)
        stats = RunningStats()
        for b in iter_path_blocks(1.0, g, 100_000, seed=2024):
            stats.add(b.M[:, -1])
        est = stats.estimate()
        assert est.within(1.0)
        assert est.stderr == pytest.approx(math.sqrt(math.e - 1) / math.sqrt(1e5), rel=0.1)

    def test_time_integral_mean(self):
        """E[A_t] = t for the trapezoid accumulation as well."""
        g = TimeGrid.uniform(2.0, 2**-5)
        stats = RunningStats()
        for b in iter_path_blocks(1.0, g, 20_000, seed=5):
            stats.add(b.A[:, -1])
        assert stats.estimate().within(2.0)

    def test_coarsen_keeps_brownian_path(self):
        g = TimeGrid.uniform(1.0, 2**-6)
        fine = simulate_path(1.0, g, seed=3)
        c = coarsen(fine, 4)
        np.testing.assert_array_equal(c.B, fine.B[::4])
        np.testing.assert_array_equal(c.M, fine.M[::4])
        trap = np.concatenate([[0.0], np.cumsum(0.5 * (c.M[1:] + c.M[:-1]) * c.grid.dt)])
        np.testing.assert_allclose(c.A, trap, rtol=1e-14)
        assert c.A[-1] == pytest.approx(fine.A[-1], rel=2e-2)

    def test_model_params(self):
        with pytest.raises(InvalidParameter):
            ModelParams(0.0, flat_curve(0.05, 10))


class TestYProcess:
    def test_initial_value(self):
        p = simulate_path(1.0, TimeGrid.uniform(1.0, 0.125), seed=0)
        assert y_process(0.1, p).values[0] == 0.1
        assert y_process_exploding(0.1, p).values[0] == 0.1

    def test_deterministic_limit(self):
        p = deterministic_path(3.0, 0.25, sigma=1e-4)
        F = 0.7
        expect = 2 * F / (2 + 1e-8 * p.grid.times * F)
        np.testing.assert_allclose(y_process(F, p).values, expect, rtol=1e-15)
        np.testing.assert_allclose(y_process(F, p).values, F, rtol=1e-7)

    def test_rejects_non_positive(self):
        p = deterministic_path(1.0, 0.5)
        with pytest.raises(NonPositiveInitial):
            y_process(0.0, p)
        with pytest.raises(NonPositiveInitial):
            y_process_exploding(-1.0, p)

    def test_sigma_mismatch(self):
        p = deterministic_path(1.0, 0.5, sigma=0.5)
        with pytest.raises(InvalidParameter):
            y_process(0.1, p, ModelParams(1.0, flat_curve(0.05, 10)))

    def test_euler_residual_first_order(self):
        """Residual of dY = sigma Y dB - (sigma^2/2) Y^2 dt shrinks like dt."""
        g = TimeGrid.uniform(1.0, 2**-10)
        fine = simulate_paths(0.8, g, 50, seed=17)
        rms = []
        for path in (coarsen(fine, 2), fine):
            Y = y_values(0.6, path.M, path.A, 0.8)
            dB = np.diff(path.B, axis=1)
            res = np.diff(Y, axis=1) - (0.8 * Y[:, :-1] * dB - 0.32 * Y[:, :-1] ** 2 * path.grid.dt)
            rms.append(np.sqrt(np.mean(res**2)))
        assert 0.3 <= rms[1] / rms[0] <= 0.8

    def test_explosion_time_deterministic(self):
        p = deterministic_path(25.0, 0.25)
        ys = y_process_exploding(0.1, p)
        assert p.grid.times[ys.exploded_at] == 20.0
        assert np.isinf(ys.values[ys.exploded_at:]).all()
        assert np.isfinite(ys.values[: ys.exploded_at]).all()

    def test_explosion_probability(self):
        """Pr[A_5 >= 2] for x0 = 1 matches the brute-force event count."""
        g = TimeGrid.uniform(5.0, 2**-6)
        n, hits, hits_oracle = 0, 0, 0
        for b in iter_path_blocks(1.0, g, 100_000, seed=8):
            ys = y_process_exploding(1.0, b)
            hits += int(np.count_nonzero(ys.exploded_at >= 0))
            hits_oracle += int(np.count_nonzero(b.A[:, -1] >= 2.0))
            n += b.n_paths
        p = hits / n
        se = math.sqrt(p * (1 - p) / n)
        assert abs(p - hits_oracle / n) <= 3 * se

    def test_not_exploded_single(self):
        assert y_process_exploding(0.1, deterministic_path(1.0, 0.25)).exploded_at is None


class TestStoppingTime:
    def test_level_below_start(self):
        p = deterministic_path(1.0, 0.25)
        assert stopping_time_level(p, None, 0.5, 0.2) == (0, True)

    def test_huge_level(self):
        p = simulate_path(1.0, TimeGrid.uniform(2.0, 2**-6), seed=1)
        idx, hit = stopping_time_level(p, None, 0.5, 1e308)
        assert not hit and idx == p.grid.n_steps

    def test_trigger_probability_reproducible(self):
        """Trigger frequency for x0 = 0.5, C = 1 agrees across independent seeds."""
        g = TimeGrid.uniform(10.0, 2**-5)
        freqs = []
        for seed in (21, 22):
            hits = 0
            for b in iter_path_blocks(1.0, g, 100_000, seed):
                hits += int(stopping_time_level(b, None, 0.5, 1.0).triggered.sum())
            freqs.append(hits / 100_000)
        se = math.sqrt(sum(f * (1 - f) for f in freqs) / 100_000)
        assert abs(freqs[0] - freqs[1]) <= 3 * se


@settings(max_examples=50, deadline=None)
@given(
    st.floats(min_value=1e-3, max_value=5),
    st.floats(min_value=0.1, max_value=2),
    st.integers(min_value=0, max_value=2**31),
)
def test_y_positive_and_bounded(x0, sigma, seed):
    """0 < Y_t(x) <= 2 M_t x / 2, and Y is increasing in x."""
    p = simulate_path(sigma, TimeGrid.uniform(1.0, 2**-6), seed=seed)
    y = y_process(x0, p).values
    assert np.all(y > 0)
    assert np.all(y <= p.M * x0 * (1 + 1e-15))
    assert np.all(y_process(1.1 * x0, p).values > y)


def test_hand_node():
    p = node_path([0.0, 5.0], [1.0, 1.2], [0.0, 3.0])
    assert y_values(0.25, p.M[1], p.A[1], 1.0) == pytest.approx(0.6 / 2.75, rel=1e-15)
