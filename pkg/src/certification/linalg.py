"""
Dense linear-algebra kernels shared by the certification modules.

Matrix exponential by scaling and squaring around a diagonal Padé core,
continuous Lyapunov solves, zero-order-hold discretization and a few
symmetric-matrix helpers.

Author: Dr. Elena Voss
Date: 2024-02-06
"""

import math
from typing import Tuple

import numpy as np
import structlog
from scipy import linalg as la

from .errors import MatrixExponentialOverflow

logger = structlog.get_logger(__name__)

DEFAULT_NORM_CAP = 50.0

# Degree-13 Padé numerator coefficients (denominator uses alternating signs)
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)

# (theta, coefficients) for the low-order approximants of degree 3, 5, 7, 9
_LOW_ORDER = (
    (0.015, (120.0, 60.0, 12.0, 1.0)),
    (0.25, (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0)),
    (0.95, (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0)),
    (2.1, (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
           2162160.0, 110880.0, 3960.0, 90.0, 1.0)),
)
_THETA13 = 5.4


def _pade_low(A: np.ndarray, b: Tuple[float, ...]) -> Tuple[np.ndarray, np.ndarray]:
    n = A.shape[0]
    ident = np.eye(n)
    A2 = A @ A
    power = ident
    U_inner = b[1] * ident
    V = b[0] * ident
    for k in range(2, len(b), 2):
        power = power @ A2
        V = V + b[k] * power
        U_inner = U_inner + b[k + 1] * power
    return A @ U_inner, V


def _pade13(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    b = _PADE13
    ident = np.eye(A.shape[0])
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    return U, V


def matrix_exponential(
    M: np.ndarray,
    t: float = 1.0,
    norm_cap: float = DEFAULT_NORM_CAP
) -> np.ndarray:
    """Compute e^{Mt} by scaling and squaring.

    The one-norm of Mt selects a diagonal Padé approximant of degree 3, 5, 7
    or 9; larger arguments are scaled by 2^-s into the degree-13 range and
    squared back.

    Args:
        M: Square real matrix
        t: Time multiplier
        norm_cap: Largest admissible one-norm of Mt

    Returns:
        e^{Mt} as a dense array

    Raises:
        ValueError: If M is not square or contains non-finite entries
        MatrixExponentialOverflow: If ||Mt||_1 exceeds norm_cap or the result
            is not finite

    Example:
        >>> matrix_exponential(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)
        array([[1., 1.],
               [0., 1.]])
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix_exponential needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)) or not math.isfinite(t):
        raise ValueError("matrix_exponential received non-finite input")

    A = M * t
    norm = float(np.linalg.norm(A, 1))
    if norm > norm_cap:
        raise MatrixExponentialOverflow(
            f"||Mt||_1 = {norm:.3g} exceeds the cap {norm_cap:.3g}"
        )
    n = A.shape[0]
    if norm == 0.0:
        return np.eye(n)

    squarings = 0
    for theta, coeffs in _LOW_ORDER:
        if norm <= theta:
            U, V = _pade_low(A, coeffs)
            break
    else:
        squarings = max(0, int(math.ceil(math.log2(norm / _THETA13))))
        U, V = _pade13(A / 2.0 ** squarings)

    R = la.solve(V - U, V + U)
    for _ in range(squarings):
        R = R @ R

    if not np.all(np.isfinite(R)):
        raise MatrixExponentialOverflow("matrix exponential produced non-finite entries")
    return R


def zoh_discretize(
    A: np.ndarray,
    B: np.ndarray,
    dt: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization of x' = Ax + Bu.

    Returns:
        (Ad, Bd) with Ad = e^{A dt} and Bd = int_0^dt e^{As} ds B
    """
    n, m = B.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = A
    block[:n, n:] = B
    E = matrix_exponential(block, dt)
    return E[:n, :n], E[:n, n:]


def symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def is_symmetric(X: np.ndarray, rtol: float = 1e-9) -> bool:
    """Symmetry test relative to the infinity norm."""
    scale = max(float(np.linalg.norm(X, np.inf)), 1e-300)
    return float(np.linalg.norm(X - X.T, np.inf)) <= rtol * scale


def spectral_abscissa(A: np.ndarray) -> float:
    """Largest real part of the eigenvalues of A."""
    return float(np.max(np.linalg.eigvals(A).real))


def solve_lyapunov(A: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Solve A^T P + P A = -W for P.

    Args:
        A: Hurwitz matrix
        W: Symmetric right-hand side

    Returns:
        Symmetric solution P
    """
    P = la.solve_continuous_lyapunov(A.T, -W)
    return symmetrize(P)


def min_eigenvalue(X: np.ndarray) -> float:
    return float(la.eigvalsh(symmetrize(X))[0])


def max_eigenvalue(X: np.ndarray) -> float:
    return float(la.eigvalsh(symmetrize(X))[-1])
