"""
Safety-controller timing: Lyapunov decay rate and worst-case SC duration.

Author: Dr. Elena Voss
Date: 2024-02-09
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import structlog
from scipy import linalg as la

from .ellipsoid import InvariantEllipsoid, closed_loop_matrix, LinearPlant
from .errors import DomainError, NotCertificate
from .linalg import symmetrize

logger = structlog.get_logger(__name__)


@dataclass
class SafetyController:
    """Trusted state-feedback law u = -K x with its timing certificate.

    Attributes:
        K: Feedback gain (m x n)
        A_SC: Closed-loop matrix A - B K
        P: Lyapunov matrix of the invariant ellipsoid
        gamma: Guaranteed decay rate of V(x) = x^T P x (1/s)
        epsilon: Inner safe-set level
        T_SC_bound: Worst-case time to reach E_eps from E_C (s)
    """
    K: np.ndarray
    A_SC: np.ndarray
    P: np.ndarray
    gamma: float
    epsilon: float
    T_SC_bound: float

    def control(self, x: np.ndarray) -> np.ndarray:
        return -self.K @ np.asarray(x, dtype=float)


def decay_rate(A_sc: np.ndarray, P: np.ndarray) -> float:
    """Guaranteed exponential decay rate gamma = lambda_min(W P^-1).

    W = -(A_SC^T P + P A_SC). The spectrum of W P^-1 equals that of the
    symmetric pencil W v = lambda P v, which is what gets solved.

    Args:
        A_sc: Closed-loop matrix
        P: Symmetric positive-definite Lyapunov matrix

    Returns:
        gamma > 0

    Raises:
        NotCertificate: If W is indefinite beyond 1e-9 ||W|| or gamma <= 0

    Example:
        >>> decay_rate(-np.eye(2), np.eye(2))
        2.0
    """
    A_sc = np.atleast_2d(np.asarray(A_sc, dtype=float))
    P = symmetrize(np.atleast_2d(np.asarray(P, dtype=float)))
    W = symmetrize(-(A_sc.T @ P + P @ A_sc))

    w_norm = float(np.linalg.norm(W, 2))
    w_min = float(la.eigvalsh(W)[0])
    if w_min < -1e-9 * w_norm:
        raise NotCertificate(
            f"A_SC^T P + P A_SC is not negative semidefinite (lambda_min(W) = {w_min:.3g})"
        )
    try:
        gamma = float(la.eigh(W, P, eigvals_only=True)[0])
    except la.LinAlgError as exc:
        raise NotCertificate(f"P is not positive definite: {exc}") from exc
    if gamma <= 0.0:
        raise NotCertificate(f"decay rate is not positive (gamma = {gamma:.3g})")
    return gamma


def safety_time_bound(gamma: float, epsilon: float) -> float:
    """Worst-case SC duration T_SC = -ln(epsilon) / gamma.

    Raises:
        DomainError: If gamma <= 0 or epsilon is outside (0, 1]
    """
    if not gamma > 0.0 or not math.isfinite(gamma):
        raise DomainError(f"gamma must be positive and finite, got {gamma}")
    if not 0.0 < epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in (0, 1], got {epsilon}")
    return -math.log(epsilon) / gamma


def lyapunov_value(P: np.ndarray, x: np.ndarray) -> float:
    """V(x) = x^T P x."""
    x = np.asarray(x, dtype=float)
    return float(x @ P @ x)


def lyapunov_values(P: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Row-wise V for a batch of states X (k x n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.einsum("ij,jk,ik->i", X, P, X)


def in_safe_set(P: np.ndarray, x: np.ndarray) -> bool:
    return lyapunov_value(P, x) <= 1.0


def in_inner_set(P: np.ndarray, x: np.ndarray, epsilon: float) -> bool:
    return lyapunov_value(P, x) <= epsilon


def build_safety_controller(
    plant: LinearPlant,
    K: np.ndarray,
    ellipsoid: InvariantEllipsoid,
    epsilon: float,
    A_sc: Optional[np.ndarray] = None
) -> SafetyController:
    """Assemble the safety controller certificate for a synthesized E_C."""
    if A_sc is None:
        A_sc = closed_loop_matrix(plant, K).matrix
    gamma = decay_rate(A_sc, ellipsoid.P)
    bound = safety_time_bound(gamma, epsilon)
    logger.info("safety_timing_computed", gamma=gamma, epsilon=epsilon, T_SC_bound=bound)
    return SafetyController(
        K=np.atleast_2d(np.asarray(K, dtype=float)),
        A_SC=A_sc,
        P=ellipsoid.P,
        gamma=gamma,
        epsilon=epsilon,
        T_SC_bound=bound,
    )
