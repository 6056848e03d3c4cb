"""
LQR gain synthesis for the safety and mission controllers.

Author: Dr. Marcus Hale
Date: 2024-02-15
"""

from typing import Optional, Tuple

import numpy as np
import structlog
from scipy import linalg as la

from .errors import ConfigError, HurwitzViolation
from .linalg import solve_lyapunov, spectral_abscissa, symmetrize

logger = structlog.get_logger(__name__)


def _weights(
    n: int,
    m: int,
    Q: np.ndarray,
    R: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    Q = np.diag(Q) if np.ndim(Q) == 1 else np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.diag(R) if np.ndim(R) == 1 else np.atleast_2d(np.asarray(R, dtype=float))
    if Q.shape != (n, n) or R.shape != (m, m):
        raise ConfigError(
            f"LQR weights must be {n}x{n} and {m}x{m}, got {Q.shape} and {R.shape}", "gains"
        )
    return Q.astype(float), R.astype(float)


def lqr_gain(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray
) -> np.ndarray:
    """Continuous-time LQR gain K = R^-1 B^T X from the algebraic Riccati equation.

    Args:
        A: State matrix
        B: Input matrix
        Q: State weight (matrix or diagonal vector)
        R: Input weight (matrix or diagonal vector)

    Returns:
        K such that u = -K x minimizes the quadratic cost
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q, R = _weights(A.shape[0], B.shape[1], Q, R)
    X = la.solve_continuous_are(A, B, Q, R)
    K = la.solve(R, B.T @ X)
    logger.debug("lqr_gain", closed_loop_abscissa=spectral_abscissa(A - B @ K))
    return K


def newton_kleinman(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    K0: np.ndarray,
    max_iter: int = 50,
    tol: float = 1e-10
) -> np.ndarray:
    """Refine a stabilizing gain into the LQR gain by Newton-Kleinman iteration.

    Each step solves the Lyapunov equation
    (A - B K)^T X + X (A - B K) = -(Q + K^T R K) and updates K = R^-1 B^T X.

    Raises:
        HurwitzViolation: If K0 does not stabilize (A, B)
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q, R = _weights(A.shape[0], B.shape[1], Q, R)
    K = np.atleast_2d(np.asarray(K0, dtype=float))
    abscissa = spectral_abscissa(A - B @ K)
    if abscissa >= 0.0:
        raise HurwitzViolation("initial gain does not stabilize the plant", abscissa, "gains")

    for iteration in range(max_iter):
        A_k = A - B @ K
        X = solve_lyapunov(A_k, symmetrize(Q + K.T @ R @ K))
        K_next = la.solve(R, B.T @ X)
        change = float(np.linalg.norm(K_next - K, np.inf))
        K = K_next
        if change <= tol * max(1.0, float(np.linalg.norm(K, np.inf))):
            logger.debug("newton_kleinman_converged", iterations=iteration + 1)
            break
    return K


def integral_augmentation(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Augment x' = Ax + Bu with integrator states eta' = C x.

    Returns:
        (A_aug, B_aug) of the (n + p)-state system [x; eta]
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    A_aug = np.zeros((n + p, n + p))
    A_aug[:n, :n] = A
    A_aug[n:, :n] = C
    B_aug = np.vstack([B, np.zeros((p, m))])
    return A_aug, B_aug


def lqr_integral_gain(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    K0: Optional[np.ndarray] = None
) -> np.ndarray:
    """LQR gain for the integral-augmented plant, shape (m, n + p)."""
    A_aug, B_aug = integral_augmentation(A, B, C)
    if K0 is not None:
        return newton_kleinman(A_aug, B_aug, Q, R, K0)
    return lqr_gain(A_aug, B_aug, Q, R)
