import numpy as np
import pytest

from longbond import ModelParams, build_initial_curve, flat_curve
from longbond.paths import PathState, TimeGrid

_RESULTS = []


def record(number, passed, detail):
    """Remember one acceptance outcome for the terminal summary."""
    _RESULTS.append((number, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_RESULTS):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def flat():
    """Flat 5% curve to a ten year horizon, sigma = 1."""
    return ModelParams(1.0, flat_curve(0.05, 10.0))


@pytest.fixture
def knotted():
    curve = build_initial_curve([(0, 1.0), (1, 0.97), (3, 0.9), (7, 0.75), (10, 0.62)])
    return ModelParams(1.0, curve)


def node_path(t_values, M_values, A_values, sigma=1.0):
    """A hand-made single path with prescribed (M, A) at given nodes."""
    grid = TimeGrid(np.asarray(t_values, dtype=float), 1.0)
    M = np.asarray(M_values, dtype=float)
    return PathState(grid, sigma, np.zeros_like(M), M, np.asarray(A_values, dtype=float))
