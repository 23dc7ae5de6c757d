"""Sticky diffusions on star graphs: path simulation, the time change that
makes a path sticky, local-time estimators, deterministic oracles and Monte
Carlo checks of the Feynman-Kac and Ito formulas."""

from .errors import (
    BeyondHorizon,
    ConfigError,
    ContinuityError,
    DegenerateInput,
    EllipticityError,
    KindError,
    NumericsError,
    QuadratureError,
    RhoSumError,
    SingularSystem,
    StickyGraphError,
    TruncationWarning,
)
from .graph import VERTEX, CoefficientSpec, GraphPoint, StarGraph, build_graph, distance, lambda_const
from .paths import NONSTICKY, STICKY, Path, simulate_nonsticky, simulate_sticky, simulate_until_exit, step, stream
from .timechange import apply_inverse, build_time_change, destickify, state_at, stickify, truncate
from .localtime import occupation_estimator, upcrossing_estimator, vertex_occupation
from .bvp import bvp_residual, solve_ball_bvp, solve_elliptic, solve_parabolic
from .validation import (
    convergence_slope,
    ito_residual,
    mc_exit_stats,
    mc_feynman_kac_elliptic,
    mc_feynman_kac_parabolic,
)
from .io import export_path_csv, import_path_csv

__version__ = "0.1.0"
