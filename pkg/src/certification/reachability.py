"""
Reach-set over-approximation under uncertain control.

The inner safe set E_eps is boxed in a linear frame T (faces +-rows of T)
and pushed forward under every admissible input in the control box U.
Face normals evolve as alpha(t) = e^{-A^T t} alpha and their offsets grow
by the running integral of the worst-case input contribution, so in the
coordinates z = e^{-At} x the set stays a box in the frame T and its
vertices map back through the forward map e^{At}.

Author: Dr. Marcus Hale
Date: 2024-02-12
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog
from scipy import linalg as la
from scipy.optimize import linprog

from .config import ReachOptions
from .errors import ConfigError, InfeasibleAtZero, QuadratureError, UnboundedPolytope
from .linalg import matrix_exponential, symmetrize

logger = structlog.get_logger(__name__)

MAX_VERTEX_DIM = 16


@dataclass
class ControlPolytope:
    """Box U = {u : lower <= u <= upper} of admissible inputs."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ConfigError("control bounds differ in length", "reachability")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ConfigError("control bounds must be finite", "reachability")
        if np.any(self.lower > self.upper):
            raise ConfigError("control lower bound exceeds upper bound", "reachability")

    @property
    def m(self) -> int:
        return self.lower.size

    def corners(self) -> np.ndarray:
        """All 2^m vertices of the box, one per row."""
        pattern = np.array(list(itertools.product((0, 1), repeat=self.m)), dtype=bool)
        return np.where(pattern, self.upper, self.lower)

    def scaled(self, factor: float) -> "ControlPolytope":
        return ControlPolytope(self.lower * factor, self.upper * factor)

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def within(self, other: "ControlPolytope") -> bool:
        """True if this box is a subset of ``other``."""
        return bool(np.all(self.lower >= other.lower) and np.all(self.upper <= other.upper))


@dataclass
class HalfspaceSet:
    """Polytope {x : alpha_i^T x <= b_i}."""
    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self) -> None:
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        self.offsets = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if self.normals.shape[0] != self.offsets.size:
            raise ConfigError("normals and offsets differ in count", "reachability")
        if np.any(np.linalg.norm(self.normals, axis=1) == 0.0):
            raise ConfigError("half-space normals must be nonzero", "reachability")
        if not np.all(np.isfinite(self.offsets)):
            raise ConfigError("half-space offsets must be finite", "reachability")

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def frame(self) -> np.ndarray:
        """Frame T when the normals are stacked as [T; -T] with T invertible.

        Raises:
            ConfigError: If the normals are not in paired box form
        """
        n = self.dim
        if self.normals.shape[0] != 2 * n:
            raise ConfigError("reach propagation needs 2n paired faces", "reachability")
        T = self.normals[:n]
        if not np.array_equal(self.normals[n:], -T):
            raise ConfigError("faces must be stacked as [T; -T]", "reachability")
        if np.linalg.matrix_rank(T) < n:
            raise ConfigError("box frame is singular", "reachability")
        return T

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(self.normals @ np.asarray(x, dtype=float) <= self.offsets + tol))


@dataclass
class ReachOverapprox:
    """Over-approximation R+(t) of the reach set at time t.

    Attributes:
        t: Time stamp (s)
        forward_map: e^{At}
        frame: Box frame T of the initial polytope
        box_offsets: Offsets of the 2n faces [T; -T] in z = e^{-At} x
        vertices: e^{At} T^-1 applied to the box corners, one per row
    """
    t: float
    forward_map: np.ndarray
    frame: np.ndarray
    box_offsets: np.ndarray
    vertices: np.ndarray = field(repr=False)

    def normals_at(self) -> np.ndarray:
        """Face normals in x coordinates, rows alpha_i(t) = e^{-A^T t} alpha_i."""
        return box_normals(self.frame) @ la.inv(self.forward_map)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        """Exact membership test of x in the polytope."""
        z = la.solve(self.forward_map, np.asarray(x, dtype=float))
        w = self.frame @ z
        n = self.frame.shape[0]
        return bool(np.all(w <= self.box_offsets[:n] + tol)
                    and np.all(-w <= self.box_offsets[n:] + tol))

    def max_value(self, P: np.ndarray) -> float:
        return float(np.max(np.einsum("ij,jk,ik->i", self.vertices, P, self.vertices)))


@dataclass
class TimingResult:
    """Outcome of the uncertain-control period search.

    Attributes:
        T_UC: Largest certified uncertain-control period (s)
        T_SR: Software-refresh duration it was compared against (s)
        feasible: T_UC > T_SR
        grid_step: Time grid of the search (s)
        diagnostics: (t, max vertex Lyapunov value) per checked grid time
        capped: True when containment held all the way to t_max
        frame: Box frame used for the bounding polytope
        offsets: Face offsets per certified grid time, shape (k, 2n)
        forward_maps: e^{At} per certified grid time, shape (k, n, n)
    """
    T_UC: float
    T_SR: float
    feasible: bool
    grid_step: float
    diagnostics: List[Tuple[float, float]]
    capped: bool = False
    frame: Optional[np.ndarray] = field(default=None, repr=False)
    offsets: Optional[np.ndarray] = field(default=None, repr=False)
    forward_maps: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def t_r(self) -> float:
        return round(self.T_UC - self.T_SR, 12)

    def reach_contains(self, k: int, x: np.ndarray, tol: float = 0.0) -> bool:
        """Membership in R+(k * grid_step) for a certified grid index k.

        ``x`` is one state or a batch with one state per row; a batch is
        contained when every row is.
        """
        if self.frame is None or self.offsets is None or self.forward_maps is None:
            raise ValueError("timing result carries no reach history")
        n = self.frame.shape[0]
        X = np.atleast_2d(np.asarray(x, dtype=float))
        w = self.frame @ la.solve(self.forward_maps[k], X.T)
        off = self.offsets[k]
        return bool(np.all(w <= off[:n, None] + tol) and np.all(-w <= off[n:, None] + tol))

    def vertices_at(self, k: int) -> np.ndarray:
        """Vertices of R+(k * grid_step), one per row."""
        if self.frame is None or self.offsets is None or self.forward_maps is None:
            raise ValueError("timing result carries no reach history")
        n = self.frame.shape[0]
        off = self.offsets[k]
        corners = _box_corners(-off[n:], off[:n])
        return corners @ (self.forward_maps[k] @ la.inv(self.frame)).T


def box_normals(frame: np.ndarray) -> np.ndarray:
    """Stack a frame T into paired box normals [T; -T]."""
    T = np.atleast_2d(np.asarray(frame, dtype=float))
    return np.vstack([T, -T])


def lyapunov_frame(P: np.ndarray) -> np.ndarray:
    """Frame T = L^T with P = L L^T, in which E_eps is a Euclidean ball."""
    L = np.linalg.cholesky(symmetrize(np.asarray(P, dtype=float)))
    return L.T


def frame_for(kind: str, P: np.ndarray) -> np.ndarray:
    if kind == "axis":
        return np.eye(P.shape[0])
    if kind == "lyapunov":
        return lyapunov_frame(P)
    raise ConfigError(f"unknown polytope frame '{kind}'", "reachability")


def _positively_spans(normals: np.ndarray) -> bool:
    n = normals.shape[1]
    if np.linalg.matrix_rank(normals) < n:
        return False
    k = normals.shape[0]
    res = linprog(
        c=np.zeros(k),
        A_eq=normals.T,
        b_eq=np.zeros(n),
        bounds=[(1.0, None)] * k,
        method="highs",
    )
    return bool(res.status == 0)


def bounding_polytope(
    P: np.ndarray,
    epsilon: float,
    normals: Optional[np.ndarray] = None
) -> HalfspaceSet:
    """Tightest polytope with the given normals containing E_eps.

    Offsets are the support values b_i = sqrt(epsilon alpha_i^T P^-1 alpha_i).

    Args:
        P: Lyapunov matrix of E_C
        epsilon: Inner level, 0 < epsilon < 1
        normals: Face normals (rows); defaults to the axis box +-e_k

    Raises:
        UnboundedPolytope: If the normals do not positively span R^n

    Example:
        >>> bounding_polytope(np.eye(2), 0.25).offsets
        array([0.5, 0.5, 0.5, 0.5])
    """
    P = symmetrize(np.atleast_2d(np.asarray(P, dtype=float)))
    n = P.shape[0]
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}", "reachability")
    normals = box_normals(np.eye(n)) if normals is None else np.atleast_2d(
        np.asarray(normals, dtype=float)
    )
    if normals.shape[1] != n:
        raise ConfigError("normal dimension does not match P", "reachability")
    if not _positively_spans(normals):
        raise UnboundedPolytope("face normals do not positively span the state space")

    Q = la.cho_solve(la.cho_factor(P, lower=True), normals.T)
    offsets = np.sqrt(epsilon * np.einsum("ij,ji->i", normals, Q))
    return HalfspaceSet(normals=normals, offsets=offsets)


def _box_corners(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    n = lower.size
    if n > MAX_VERTEX_DIM:
        raise ConfigError(f"vertex enumeration limited to n <= {MAX_VERTEX_DIM}", "reachability")
    pattern = np.array(list(itertools.product((0, 1), repeat=n)), dtype=bool)
    return np.where(pattern, upper, lower)


def _segment_integrals(g: np.ndarray, c: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid integral of g(c(tau)) with the kink of g at c = 0 resolved.

    g is piecewise linear in c with g(0) = 0; on a segment where c changes
    sign the piecewise-linear interpolant of c is integrated exactly.
    """
    g0, g1 = g[:-1], g[1:]
    c0, c1 = np.abs(c[:-1]), np.abs(c[1:])
    crossing = (c[:-1] * c[1:]) < 0.0
    plain = 0.5 * h * (g0 + g1)
    denom = np.where(crossing, c0 + c1, 1.0)
    kinked = 0.5 * h * (g0 * c0 + g1 * c1) / denom
    return np.where(crossing, kinked, plain).sum(axis=0)


class ReachIntegrator:
    """Accumulates face offsets of R+(t) over consecutive time intervals.

    Tracks M(tau) = e^{-A^T tau} T^T, whose columns are the evolving normals
    of the +T faces, and the forward map e^{A tau}.

    Args:
        A: Plant state matrix
        B: Plant input matrix
        U: Admissible control box
        init: Initial polytope in [T; -T] form
        options: Quadrature and exponential options
    """

    def __init__(
        self,
        A: np.ndarray,
        B: np.ndarray,
        U: ControlPolytope,
        init: HalfspaceSet,
        options: Optional[ReachOptions] = None
    ):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.asarray(B, dtype=float).reshape(self.A.shape[0], -1)
        if self.B.shape[1] != U.m:
            raise ConfigError("control box dimension does not match B", "reachability")
        self.U = U
        self.options = options or ReachOptions()
        self.frame = init.frame()
        self.offsets = init.offsets.copy()
        self.t = 0.0
        self.normals_t = self.frame.T.copy()
        self.forward_map = np.eye(self.A.shape[0])
        self._exp_cache: Dict[Tuple[str, float], np.ndarray] = {}

    def _exp(self, sign: str, h: float) -> np.ndarray:
        key = (sign, h)
        if key not in self._exp_cache:
            M = -self.A.T if sign == "adjoint" else self.A
            self._exp_cache[key] = matrix_exponential(M, h, self.options.norm_cap)
        return self._exp_cache[key]

    def _integrate(self, duration: float, segments: int) -> np.ndarray:
        """Input-contribution integrals of all 2n faces over [t, t + duration]."""
        h = duration / segments
        step = self._exp("adjoint", h)
        samples = np.empty((segments + 1,) + self.normals_t.shape)
        samples[0] = self.normals_t
        for j in range(segments):
            samples[j + 1] = step @ samples[j]
        # c[j, k, i] = (B^T alpha_i(tau_j))_k
        c = np.einsum("nk,jni->jki", self.B, samples)
        lo = self.U.lower[None, :, None]
        hi = self.U.upper[None, :, None]
        plus = np.maximum(lo * c, hi * c)
        minus = np.maximum(-lo * c, -hi * c)
        upper = _segment_integrals(plus, c, h).sum(axis=0)
        lower = _segment_integrals(minus, c, h).sum(axis=0)
        return np.concatenate([upper, lower])

    def advance(self, duration: float, quad_step: Optional[float] = None) -> None:
        """Propagate the polytope by ``duration`` seconds.

        Raises:
            QuadratureError: If the Richardson estimate stays above the
                relative tolerance after all refinements
        """
        if duration <= 0.0:
            return
        quad_step = quad_step or self.options.quad_step
        segments = max(2, int(math.ceil(duration / quad_step - 1e-9)))
        segments += segments % 2

        for _ in range(self.options.max_refinements + 1):
            fine = self._integrate(duration, segments)
            coarse = self._integrate(duration, segments // 2)
            err = np.abs(fine - coarse) / 3.0
            candidate = self.offsets + fine + err
            if np.all(err <= self.options.richardson_rtol * np.abs(candidate)):
                break
            segments *= 2
        else:
            raise QuadratureError(
                f"quadrature did not settle on [{self.t:.6g}, {self.t + duration:.6g}] "
                f"(max rel error {float(np.max(err / np.abs(candidate))):.3g})"
            )

        self.offsets = candidate
        self.normals_t = self._exp("adjoint", duration) @ self.normals_t
        self.forward_map = self._exp("forward", duration) @ self.forward_map
        self.t += duration

    def snapshot(self, t: Optional[float] = None) -> ReachOverapprox:
        """Current R+(t) with its vertex list."""
        n = self.frame.shape[0]
        corners = _box_corners(-self.offsets[n:], self.offsets[:n])
        G = self.forward_map @ la.inv(self.frame)
        return ReachOverapprox(
            t=self.t if t is None else t,
            forward_map=self.forward_map.copy(),
            frame=self.frame,
            box_offsets=self.offsets.copy(),
            vertices=corners @ G.T,
        )

    def max_value(self, P: np.ndarray) -> float:
        """Largest x^T P x over the current vertices, without storing them."""
        n = self.frame.shape[0]
        corners = _box_corners(-self.offsets[n:], self.offsets[:n])
        G = self.forward_map @ la.inv(self.frame)
        H = G.T @ P @ G
        return float(np.max(np.einsum("ij,jk,ik->i", corners, H, corners)))


def reach_overapprox_at(
    A: np.ndarray,
    B: np.ndarray,
    U: ControlPolytope,
    init: HalfspaceSet,
    t: float,
    quad_step: float = 0.001
) -> ReachOverapprox:
    """Over-approximate the reach set of ``init`` at time t.

    Offsets at time t are b_i + int_0^t max_{u in U} <alpha_i(tau), B u> dtau,
    the max taken channelwise as sum_k max(l_k c_k, u_k c_k), c = B^T alpha_i.

    Args:
        A: State matrix
        B: Input matrix
        U: Control box
        init: Initial polytope with faces [T; -T]
        t: Horizon (s), t >= 0
        quad_step: Composite trapezoid step

    Returns:
        ReachOverapprox; at t = 0 it reproduces ``init`` exactly

    Example:
        >>> U = ControlPolytope([-1.0], [1.0])
        >>> init = HalfspaceSet([[1.0], [-1.0]], [0.5, 0.5])
        >>> reach_overapprox_at([[0.0]], [[1.0]], U, init, 1.0).vertices.ravel()
        array([-1.5,  1.5])
    """
    if t < 0.0:
        raise ConfigError("reach time must be nonnegative", "reachability")
    options = ReachOptions(grid_step=max(quad_step * 10.0, 1e-12), t_max=max(t, quad_step * 10.0))
    integrator = ReachIntegrator(A, B, U, init, options)
    if t > 0.0:
        chunk = quad_step * 10.0
        chunks = max(1, int(math.ceil(t / chunk - 1e-9)))
        for _ in range(chunks):
            integrator.advance(t / chunks, quad_step)
    return integrator.snapshot(t)


def contained_in_ellipsoid(reach: ReachOverapprox, P: np.ndarray, tol: float = 0.0) -> bool:
    """True iff every vertex x^i satisfies x^i^T P x^i <= 1 (+ tol).

    Convexity of x^T P x makes the vertex test exact for the whole polytope.
    """
    if reach.vertices.size == 0:
        raise ConfigError("reach set has no vertices", "reachability")
    return reach.max_value(P) <= 1.0 + tol


def find_T_UC(
    A: np.ndarray,
    B: np.ndarray,
    U: ControlPolytope,
    P: np.ndarray,
    epsilon: float,
    T_SR: float,
    grid_step: Optional[float] = None,
    t_max: Optional[float] = None,
    options: Optional[ReachOptions] = None
) -> TimingResult:
    """Largest grid time T_UC with R+(t) inside E_C at every grid time up to it.

    The search walks the grid k * grid_step, stops at the first grid time
    whose reach polytope leaves E_C and backs off ``margin_steps`` further
    steps. Containment is decided with ``containment_tol`` of slack for
    floating-point rounding only.

    Args:
        A: State matrix of the linearized plant
        B: Input matrix
        U: Protected MC/SR control box
        P: Lyapunov matrix of E_C
        epsilon: Inner safe-set level
        T_SR: Software-refresh duration (s)
        grid_step: Overrides options.grid_step
        t_max: Overrides options.t_max
        options: Grid, horizon, quadrature and frame options

    Returns:
        TimingResult with T_UC, the feasibility verdict T_UC > T_SR and
        per-grid-time diagnostics

    Raises:
        InfeasibleAtZero: If the initial bounding polytope already leaves E_C
    """
    options = options or ReachOptions()
    overrides = {
        key: value
        for key, value in (("grid_step", grid_step), ("t_max", t_max))
        if value is not None
    }
    if overrides:
        options = ReachOptions(**{**options.model_dump(), **overrides})
    P = symmetrize(np.atleast_2d(np.asarray(P, dtype=float)))
    T = frame_for(options.frame, P)
    init = bounding_polytope(P, epsilon, box_normals(T))
    integrator = ReachIntegrator(A, B, U, init, options)
    grid = options.grid_step
    slack = options.containment_tol

    value = integrator.max_value(P)
    if value > 1.0 + slack:
        raise InfeasibleAtZero(
            f"bounding polytope of E_eps leaves E_C at t=0 (max V = {value:.6g})", value
        )

    diagnostics = [(0.0, value)]
    offsets = [integrator.offsets.copy()]
    forward = [integrator.forward_map.copy()]
    steps = int(math.floor(options.t_max / grid + 1e-9))
    last_good = 0
    capped = True
    for k in range(1, steps + 1):
        integrator.advance(grid)
        value = integrator.max_value(P)
        t = round(k * grid, 12)
        diagnostics.append((t, value))
        if value > 1.0 + slack:
            capped = False
            break
        last_good = k
        offsets.append(integrator.offsets.copy())
        forward.append(integrator.forward_map.copy())

    certified = max(last_good - options.margin_steps, 0)
    T_UC = round(certified * grid, 12)
    feasible = T_UC > round(T_SR, 12)
    logger.info(
        "uncertain_control_period_found",
        T_UC=T_UC,
        T_SR=T_SR,
        feasible=feasible,
        capped=capped,
        frame=options.frame,
        grid_step=grid,
    )
    return TimingResult(
        T_UC=T_UC,
        T_SR=T_SR,
        feasible=feasible,
        grid_step=grid,
        diagnostics=diagnostics,
        capped=capped,
        frame=T,
        offsets=np.array(offsets),
        forward_maps=np.array(forward),
    )
