"""
Certification layer of the Safe Rejuvenation Toolkit.

Maximal invariant ellipsoid synthesis, safety-control timing, reach-set
over-approximation and the uncertain-control period search.

Author: Dr. Elena Voss
Date: 2024-02-05
"""

__version__ = "1.0.1"

from .config import ReachOptions, SolverOptions, settings
from .ellipsoid import (
    InvariantEllipsoid,
    LinearPlant,
    PolyhedralConstraints,
    closed_loop_matrix,
    lyapunov_fallback_ellipsoid,
    synthesize_max_ellipsoid,
    verify_ellipsoid,
)
from .reachability import ControlPolytope, TimingResult, find_T_UC
from .safety_timing import SafetyController, decay_rate, safety_time_bound
from .tuning import TuningStrategy, tune_feasibility

__all__ = [
    "ControlPolytope",
    "InvariantEllipsoid",
    "LinearPlant",
    "PolyhedralConstraints",
    "ReachOptions",
    "SafetyController",
    "SolverOptions",
    "TimingResult",
    "TuningStrategy",
    "closed_loop_matrix",
    "decay_rate",
    "find_T_UC",
    "lyapunov_fallback_ellipsoid",
    "safety_time_bound",
    "settings",
    "synthesize_max_ellipsoid",
    "tune_feasibility",
    "verify_ellipsoid",
]
