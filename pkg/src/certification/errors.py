"""
Exception hierarchy for the certification and testbed layers.

Every error carries the name of the module that raised it so the CLI can
print module-tagged diagnostics and map failures onto exit codes.

Author: Dr. Elena Voss
Date: 2024-02-05
"""

from typing import Any, List, Optional


class RejuvenationError(Exception):
    """Base class for all toolkit errors.

    Args:
        message: Human readable description
        module: Name of the module the failure originated in
    """

    module = "core"

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class ConfigError(RejuvenationError, ValueError):
    """Scenario or timing configuration is inconsistent."""

    module = "config"


class HurwitzViolation(RejuvenationError):
    """Closed-loop matrix has an eigenvalue with real part >= -1e-9."""

    module = "ellipsoid"

    def __init__(self, message: str, max_real_part: float, module: Optional[str] = None):
        super().__init__(message, module)
        self.max_real_part = max_real_part


class NotHurwitz(HurwitzViolation):
    """Raised by the synthesis routines when handed an unstable A_SC."""


class SolverFailure(RejuvenationError):
    """Barrier iteration did not converge within the iteration cap."""

    module = "ellipsoid"

    def __init__(self, message: str, last_iterate: Any = None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegenerateConstraints(RejuvenationError):
    module = "ellipsoid"


class NotCertificate(RejuvenationError):
    """(A_SC, P) is not a valid Lyapunov pair."""

    module = "safety_timing"


class DomainError(RejuvenationError, ValueError):
    module = "safety_timing"


class MatrixExponentialOverflow(RejuvenationError):
    module = "linalg"


class UnboundedPolytope(RejuvenationError):
    module = "reachability"


class QuadratureError(RejuvenationError):
    module = "reachability"


class InfeasibleAtZero(RejuvenationError):
    """The initial bounding polytope already leaves E_C."""

    module = "reachability"

    def __init__(self, message: str, max_value: float):
        super().__init__(message)
        self.max_value = max_value


class TuningExhausted(RejuvenationError):
    """No tuning step produced a feasible timing result."""

    module = "tuning"

    def __init__(self, message: str, log: List[Any]):
        super().__init__(message)
        self.log = log


class NonFiniteState(RejuvenationError):
    module = "simulator"

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class ExportError(RejuvenationError):
    module = "export"
