"""
Maximal-volume invariant ellipsoid synthesis.

Computes E_C = {x : x^T P x <= 1}, the largest positively invariant
ellipsoid of the safety closed loop that fits inside the polyhedral
operating region C = {x : xi_j^T x <= 1}. The determinant maximization is
solved with a damped Newton log-barrier method over the upper triangle of
Q = P^-1, started from a scaled Lyapunov ellipsoid.

Author: Dr. Elena Voss
Date: 2024-02-08
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import structlog
from scipy import linalg as la

from .config import SolverOptions
from .errors import (
    ConfigError,
    DegenerateConstraints,
    HurwitzViolation,
    NotHurwitz,
    SolverFailure,
)
from .linalg import (
    is_symmetric,
    max_eigenvalue,
    min_eigenvalue,
    solve_lyapunov,
    spectral_abscissa,
    symmetrize,
)

logger = structlog.get_logger(__name__)

HURWITZ_MARGIN = 1e-9
SYMMETRY_RTOL = 1e-9
INVERSE_TOL = 1e-7
LMI_RTOL = 1e-8
CONTAINMENT_TOL = 1e-8


@dataclass
class LinearPlant:
    """Linearized plant x' = A x + B u around the equilibrium x_e.

    States are deviations from x_e, so x_e sits at the origin internally.

    Attributes:
        A: State matrix (n x n)
        B: Input matrix (n x m)
        x_e: Equilibrium in the original coordinates
    """
    A: np.ndarray
    B: np.ndarray
    x_e: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float)
        if self.B.ndim == 1:
            self.B = self.B.reshape(-1, 1)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ConfigError(f"A must be square, got {self.A.shape}", "ellipsoid")
        if self.B.shape[0] != n:
            raise ConfigError(
                f"B has {self.B.shape[0]} rows but A is {n}x{n}", "ellipsoid"
            )
        self.x_e = (
            np.zeros(n) if self.x_e is None else np.asarray(self.x_e, dtype=float)
        )
        if self.x_e.shape != (n,):
            raise ConfigError(f"x_e must have length {n}", "ellipsoid")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))
                and np.all(np.isfinite(self.x_e))):
            raise ConfigError("plant matrices contain non-finite entries", "ellipsoid")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass
class PolyhedralConstraints:
    """Polyhedron C = {x : xi_j^T x <= 1 for all j}.

    Attributes:
        normals: Array of shape (n_c, n), one normalized row xi_j per face
    """
    normals: np.ndarray

    def __post_init__(self) -> None:
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        if self.normals.size == 0:
            raise ConfigError("constraint set is empty", "ellipsoid")
        if not np.all(np.isfinite(self.normals)):
            raise ConfigError("constraint normals must be finite", "ellipsoid")
        if np.any(np.linalg.norm(self.normals, axis=1) == 0.0):
            raise ConfigError("constraint normals must be nonzero", "ellipsoid")

    @classmethod
    def from_halfspaces(cls, a: np.ndarray, b: np.ndarray) -> "PolyhedralConstraints":
        """Normalize rows a_j^T x <= b_j (b_j > 0) into xi_j = a_j / b_j."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ConfigError("half-space rows and offsets differ in count", "ellipsoid")
        if np.any(b <= 0.0):
            raise ConfigError(
                "half-space offsets must be positive so C contains the origin",
                "ellipsoid",
            )
        return cls(a / b[:, None])

    @property
    def n_c(self) -> int:
        return self.normals.shape[0]

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def extended(self, rows: np.ndarray) -> "PolyhedralConstraints":
        """Return a copy with additional normalized rows appended."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        return PolyhedralConstraints(np.vstack([self.normals, rows]))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(self.normals @ np.asarray(x, dtype=float) <= 1.0 + tol))


@dataclass
class InvariantEllipsoid:
    """Ellipsoid E_C = {x : x^T P x <= 1} with P = Q^-1.

    Attributes:
        Q: Shape matrix (symmetric positive definite)
        P: Inverse shape matrix
        log_volume: log det Q
    """
    Q: np.ndarray
    P: np.ndarray
    log_volume: float

    @classmethod
    def from_shape(cls, Q: np.ndarray) -> "InvariantEllipsoid":
        Q = symmetrize(np.atleast_2d(np.asarray(Q, dtype=float)))
        chol = la.cho_factor(Q, lower=True)
        P = symmetrize(la.cho_solve(chol, np.eye(Q.shape[0])))
        log_volume = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
        return cls(Q=Q, P=P, log_volume=log_volume)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def semi_axes(self) -> np.ndarray:
        """Semi-axis lengths, ascending."""
        return np.sqrt(la.eigvalsh(self.Q))

    def support(self, direction: np.ndarray) -> float:
        """Support value max_{x in E_C} direction^T x."""
        d = np.asarray(direction, dtype=float)
        return float(np.sqrt(d @ self.Q @ d))


@dataclass
class VerificationReport:
    """Numerical evidence that Q defines a safe invariant ellipsoid.

    Saturation fields are only filled when a gain and limits are supplied.
    """
    lmi_max_eigenvalue: float
    max_containment: float
    min_eigenvalue_q: float
    symmetric: bool
    lmi_ok: bool
    containment_ok: bool
    positive_ok: bool
    inverse_ok: Optional[bool] = None
    saturation_peaks: Optional[List[float]] = None
    saturation_ok: Optional[bool] = None

    @property
    def passed(self) -> bool:
        checks = [self.symmetric, self.lmi_ok, self.containment_ok, self.positive_ok]
        if self.inverse_ok is not None:
            checks.append(self.inverse_ok)
        return all(checks)

    def as_dict(self) -> dict:
        return {
            "lmi_max_eigenvalue": self.lmi_max_eigenvalue,
            "max_containment": self.max_containment,
            "min_eigenvalue_q": self.min_eigenvalue_q,
            "symmetric": self.symmetric,
            "lmi_ok": self.lmi_ok,
            "containment_ok": self.containment_ok,
            "positive_ok": self.positive_ok,
            "inverse_ok": self.inverse_ok,
            "saturation_peaks": self.saturation_peaks,
            "saturation_ok": self.saturation_ok,
            "passed": self.passed,
        }


class ClosedLoop(NamedTuple):
    matrix: np.ndarray
    max_real_part: float


def closed_loop_matrix(plant: LinearPlant, K: np.ndarray) -> ClosedLoop:
    """Form A_SC = A - B K and check that it is Hurwitz.

    Args:
        plant: Linearized plant
        K: State-feedback gain (m x n)

    Returns:
        ClosedLoop with the matrix and the largest eigenvalue real part

    Raises:
        ConfigError: If K has the wrong shape or non-finite entries
        HurwitzViolation: If some eigenvalue has real part >= -1e-9

    Example:
        >>> plant = LinearPlant(A=[[0.0]], B=[[1.0]])
        >>> closed_loop_matrix(plant, np.array([[1.0]])).max_real_part
        -1.0
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (plant.m, plant.n):
        raise ConfigError(
            f"gain must be {plant.m}x{plant.n}, got {K.shape[0]}x{K.shape[1]}", "ellipsoid"
        )
    if not np.all(np.isfinite(K)):
        raise ConfigError("gain contains non-finite entries", "ellipsoid")

    A_sc = plant.A - plant.B @ K
    abscissa = spectral_abscissa(A_sc)
    if abscissa >= -HURWITZ_MARGIN:
        raise HurwitzViolation(
            f"closed loop is not Hurwitz (max real part {abscissa:.3g})", abscissa
        )
    return ClosedLoop(A_sc, abscissa)


def _require_hurwitz(A_sc: np.ndarray) -> float:
    abscissa = spectral_abscissa(A_sc)
    if abscissa >= -HURWITZ_MARGIN:
        raise NotHurwitz(
            f"A_SC is not Hurwitz (max real part {abscissa:.3g})", abscissa
        )
    return abscissa


def lyapunov_fallback_ellipsoid(
    A_sc: np.ndarray,
    constraints: PolyhedralConstraints,
    W: Optional[np.ndarray] = None
) -> InvariantEllipsoid:
    """Scaled Lyapunov ellipsoid inscribed in C.

    Solves A_SC^T P0 + P0 A_SC = -W and scales Q = c P0^-1 by the largest c
    keeping every face satisfied, c = min_j 1 / (xi_j^T P0^-1 xi_j).

    Args:
        A_sc: Hurwitz closed-loop matrix
        constraints: Polyhedral safe region
        W: Positive-definite right-hand side, identity by default

    Returns:
        InvariantEllipsoid touching at least one face of C

    Raises:
        NotHurwitz: If A_sc is not Hurwitz
        DegenerateConstraints: If no face gives a positive support value
    """
    A_sc = np.atleast_2d(np.asarray(A_sc, dtype=float))
    _require_hurwitz(A_sc)
    n = A_sc.shape[0]
    W = np.eye(n) if W is None else np.atleast_2d(np.asarray(W, dtype=float))

    P0 = solve_lyapunov(A_sc, W)
    Q0 = symmetrize(la.inv(P0))
    xi = constraints.normals
    support_sq = np.einsum("ij,jk,ik->i", xi, Q0, xi)
    if not np.any(support_sq > 0.0):
        raise DegenerateConstraints("all faces have zero support on the Lyapunov ellipsoid")

    c = 1.0 / float(np.max(support_sq))
    return InvariantEllipsoid.from_shape(c * Q0)


class _LogDetBarrier:
    """Log-barrier formulation of the maximal invariant ellipsoid problem.

    Decision vector q holds the upper triangle of Q; vec(Q) = D q with the
    row-major vectorization. The barrier objective

        phi_t(q) = t log det Q + log det F(Q) + sum_j log(1 - xi_j^T Q xi_j),
        F(Q) = -(Q A^T + A Q),

    is concave and maximized by damped Newton steps.
    """

    def __init__(self, A: np.ndarray, normals: np.ndarray, tol_feas: float = 0.0):
        self.A = A
        self.tol_feas = tol_feas
        self.n = A.shape[0]
        self.xi = normals
        n = self.n
        ident = np.eye(n)
        self.lmi_map = -(np.kron(A, ident) + np.kron(ident, A))

        rows, cols = np.triu_indices(n)
        self.rows, self.cols = rows, cols
        dup = np.zeros((n * n, rows.size))
        for k, (i, j) in enumerate(zip(rows, cols)):
            dup[i * n + j, k] = 1.0
            dup[j * n + i, k] = 1.0
        self.dup = dup
        # (xi kron xi) rows, one per face
        self.face_vecs = np.einsum("ji,jk->jik", normals, normals).reshape(len(normals), n * n)

    def to_matrix(self, q: np.ndarray) -> np.ndarray:
        Q = np.zeros((self.n, self.n))
        Q[self.rows, self.cols] = q
        Q[self.cols, self.rows] = q
        return Q

    def to_vector(self, Q: np.ndarray) -> np.ndarray:
        return Q[self.rows, self.cols].copy()

    def lmi(self, Q: np.ndarray) -> np.ndarray:
        return -(Q @ self.A.T + self.A @ Q)

    def slacks(self, Q: np.ndarray) -> np.ndarray:
        return 1.0 - self.face_vecs @ Q.reshape(-1)

    def evaluate(self, q: np.ndarray, t: float) -> Optional[float]:
        """Barrier value, or None unless every face keeps more than tol_feas slack."""
        Q = self.to_matrix(q)
        s = self.slacks(Q)
        if np.any(s <= self.tol_feas):
            return None
        try:
            LQ = np.linalg.cholesky(Q)
            LF = np.linalg.cholesky(self.lmi(Q))
        except np.linalg.LinAlgError:
            return None
        logdet_q = 2.0 * np.sum(np.log(np.diag(LQ)))
        logdet_f = 2.0 * np.sum(np.log(np.diag(LF)))
        return float(t * logdet_q + logdet_f + np.sum(np.log(s)))

    def rescaled_ok(self, Q: np.ndarray, tol: float) -> bool:
        """Faces within 1 + tol and lambda_max of the LMI within tol ||Q||."""
        faces_ok = float(np.max(self.face_vecs @ Q.reshape(-1))) <= 1.0 + tol
        lmi_max = max_eigenvalue(-self.lmi(Q))
        return faces_ok and lmi_max <= tol * float(np.linalg.norm(Q, np.inf))

    def newton_direction(self, q: np.ndarray, t: float) -> Tuple[np.ndarray, float]:
        """Newton ascent direction and squared decrement at a strictly feasible q."""
        Q = self.to_matrix(q)
        Qi = la.inv(Q)
        Fi = la.inv(self.lmi(Q))
        s = self.slacks(Q)
        M = self.lmi_map

        grad = (
            t * Qi.reshape(-1)
            + M.T @ Fi.reshape(-1)
            - self.face_vecs.T @ (1.0 / s)
        )
        weighted = self.face_vecs / s[:, None]
        hess = (
            -t * np.kron(Qi, Qi)
            - M.T @ np.kron(Fi, Fi) @ M
            - weighted.T @ weighted
        )
        g = self.dup.T @ grad
        H = self.dup.T @ hess @ self.dup
        step = la.solve(-symmetrize(H), g, assume_a="pos")
        return step, float(g @ step)


def synthesize_max_ellipsoid(
    A_sc: np.ndarray,
    constraints: PolyhedralConstraints,
    opts: Optional[SolverOptions] = None
) -> InvariantEllipsoid:
    """Maximize log det Q subject to invariance and containment in C.

    Solves

        max log det Q  s.t.  Q A^T + A Q <= 0,  xi_j^T Q xi_j <= 1,  Q > 0

    with A = A_SC, or A = A_SC + alpha I when opts.decay_fraction reserves a
    decay margin alpha = decay_fraction * |max Re eig(A_SC)|. The barrier
    weight t grows by opts.barrier_mu until the central-path gap
    (n + n_c) / t drops below opts.rel_gap. Barrier iterates keep more than
    opts.tol_feas of slack on every face; the rescaled result must meet the
    faces and the LMI within opts.tol_feas, otherwise the fallback is
    returned. The result is never smaller than the Lyapunov fallback
    ellipsoid for the same LMI matrix.

    Args:
        A_sc: Hurwitz closed-loop matrix
        constraints: Polyhedral safe region
        opts: Solver options

    Returns:
        InvariantEllipsoid satisfying the LMI and containment invariants

    Raises:
        NotHurwitz: If A_sc is not Hurwitz
        SolverFailure: If opts.max_iter Newton steps do not reach the gap
            tolerance; ``last_iterate`` holds the last feasible ellipsoid

    Example:
        >>> box = PolyhedralConstraints(np.vstack([np.eye(2), -np.eye(2)]))
        >>> E = synthesize_max_ellipsoid(-np.eye(2), box)
        >>> np.allclose(E.Q, np.eye(2), atol=1e-2)
        True
    """
    opts = opts or SolverOptions()
    A_sc = np.atleast_2d(np.asarray(A_sc, dtype=float))
    abscissa = _require_hurwitz(A_sc)
    n = A_sc.shape[0]
    if constraints.dim != n:
        raise ConfigError(
            f"constraints live in R^{constraints.dim} but A_SC is {n}x{n}", "ellipsoid"
        )

    shift = opts.decay_fraction * (-abscissa)
    A_lmi = A_sc + shift * np.eye(n)
    fallback = lyapunov_fallback_ellipsoid(A_lmi, constraints)

    barrier = _LogDetBarrier(A_lmi, constraints.normals, opts.tol_feas)
    q = barrier.to_vector(0.5 * fallback.Q)
    t = 1.0
    degree = n + constraints.n_c
    iterations = 0
    slope_ratio, shrink = 0.25, 0.5

    while True:
        value = barrier.evaluate(q, t)
        while True:
            step, decrement_sq = barrier.newton_direction(q, t)
            if decrement_sq / 2.0 <= 1e-10:
                break
            if iterations >= opts.max_iter:
                raise SolverFailure(
                    f"no convergence within {opts.max_iter} Newton steps (t={t:.3g})",
                    last_iterate=InvariantEllipsoid.from_shape(barrier.to_matrix(q)),
                )
            size = 1.0
            while size > 1e-14:
                candidate = barrier.evaluate(q + size * step, t)
                if candidate is not None and candidate >= value + slope_ratio * size * decrement_sq:
                    break
                size *= shrink
            else:
                break
            q = q + size * step
            value = candidate
            iterations += 1

        if degree / t < opts.rel_gap:
            break
        t *= opts.barrier_mu

    Q = barrier.to_matrix(q)
    # The LMI is a cone: rescaling until the nearest face is tight keeps it
    worst = float(np.max(barrier.face_vecs @ Q.reshape(-1)))
    if worst > 0.0:
        Q = Q / worst
    result = InvariantEllipsoid.from_shape(Q)

    if not barrier.rescaled_ok(Q, opts.tol_feas):
        logger.warning("ellipsoid_rescale_rejected", worst_face=worst)
        result = fallback
    elif result.log_volume < fallback.log_volume:
        result = fallback

    logger.info(
        "ellipsoid_synthesized",
        dim=n,
        faces=constraints.n_c,
        log_volume=result.log_volume,
        fallback_log_volume=fallback.log_volume,
        newton_steps=iterations,
        decay_shift=shift,
    )
    return result


def verify_ellipsoid(
    Q: np.ndarray,
    A_sc: np.ndarray,
    constraints: PolyhedralConstraints,
    K: Optional[np.ndarray] = None,
    u_lower: Optional[np.ndarray] = None,
    u_upper: Optional[np.ndarray] = None
) -> VerificationReport:
    """Check the defining properties of an invariant safe ellipsoid.

    Tolerances: symmetry 1e-9 (relative), LMI lambda_max <= 1e-8 ||Q||,
    containment xi_j^T Q xi_j <= 1 + 1e-8, lambda_min(Q) > 0. When a gain
    and input bounds are given, the peak of |K_i x| over E_C,
    sqrt(K_i Q K_i^T), is compared against the tighter of the two bounds.

    Returns:
        VerificationReport; never raises on failed checks
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    A_sc = np.atleast_2d(np.asarray(A_sc, dtype=float))
    symmetric = is_symmetric(Q, SYMMETRY_RTOL)
    Qs = symmetrize(Q)

    lmi_max = max_eigenvalue(Qs @ A_sc.T + A_sc @ Qs)
    xi = constraints.normals
    max_containment = float(np.max(np.einsum("ij,jk,ik->i", xi, Qs, xi)))
    lam_min = min_eigenvalue(Qs)
    q_norm = float(np.linalg.norm(Qs, np.inf))

    inverse_ok: Optional[bool] = None
    if lam_min > 0.0:
        P = la.inv(Qs)
        inverse_ok = bool(np.linalg.norm(P @ Qs - np.eye(Q.shape[0]), np.inf) <= INVERSE_TOL)

    peaks: Optional[List[float]] = None
    saturation_ok: Optional[bool] = None
    if K is not None and u_lower is not None and u_upper is not None:
        K = np.atleast_2d(np.asarray(K, dtype=float))
        peaks = [float(np.sqrt(max(k @ Qs @ k, 0.0))) for k in K]
        bound = np.minimum(np.abs(np.asarray(u_lower, float)), np.abs(np.asarray(u_upper, float)))
        saturation_ok = bool(np.all(np.asarray(peaks) <= bound * (1.0 + CONTAINMENT_TOL)))

    return VerificationReport(
        lmi_max_eigenvalue=lmi_max,
        max_containment=max_containment,
        min_eigenvalue_q=lam_min,
        symmetric=symmetric,
        lmi_ok=bool(lmi_max <= LMI_RTOL * q_norm),
        containment_ok=bool(max_containment <= 1.0 + CONTAINMENT_TOL),
        positive_ok=bool(lam_min > 0.0),
        inverse_ok=inverse_ok,
        saturation_peaks=peaks,
        saturation_ok=saturation_ok,
    )
