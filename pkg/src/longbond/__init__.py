"""One-factor term-structure model with the long bond as numeraire."""

from .curve import (
    CurvePoint,
    ForwardCurve,
    InitialCurve,
    build_initial_curve,
    cantor_curve,
    flat_curve,
    nominal_forward_curve,
    power_law_curve,
    read_curve_csv,
    user_curve,
)
from .errors import *  # noqa: F401,F403
from .montecarlo import MCConfig, MCEstimate
from .paths import (
    ModelParams,
    PathState,
    TimeGrid,
    simulate_path,
    simulate_paths,
    stopping_time_level,
    y_process,
    y_process_exploding,
)

__version__ = "0.1.0"
