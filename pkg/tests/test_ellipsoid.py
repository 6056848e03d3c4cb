"""
Unit tests for maximal invariant ellipsoid synthesis.

The determinant maximization is checked against a brute-force oracle over
unit-determinant 2x2 shapes S = R(theta) diag(e^{r/2}, e^{-r/2}) R(theta)^T,
scaled to touch the nearest face.

Author: Dr. Elena Voss
Date: 2024-03-05
"""

import numpy as np
import pytest
from scipy.optimize import minimize

from src.certification.config import SolverOptions
from src.certification.ellipsoid import (
    InvariantEllipsoid,
    LinearPlant,
    PolyhedralConstraints,
    _LogDetBarrier,
    closed_loop_matrix,
    lyapunov_fallback_ellipsoid,
    synthesize_max_ellipsoid,
    verify_ellipsoid,
)
from src.certification.errors import (
    ConfigError,
    HurwitzViolation,
    NotHurwitz,
    SolverFailure,
)
from src.certification.linalg import matrix_exponential


def _shapes(r: np.ndarray, theta: np.ndarray) -> np.ndarray:
    a = np.exp(r / 2.0)
    c, s = np.cos(theta), np.sin(theta)
    S = np.empty(r.shape + (2, 2))
    S[..., 0, 0] = a * c**2 + s**2 / a
    S[..., 1, 1] = a * s**2 + c**2 / a
    S[..., 0, 1] = S[..., 1, 0] = (a - 1.0 / a) * c * s
    return S


def _lmi_margins(S: np.ndarray, A: np.ndarray):
    AS = np.einsum("ij,...jk->...ik", A, S)
    M = AS + np.swapaxes(AS, -1, -2)
    trace = M[..., 0, 0] + M[..., 1, 1]
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] ** 2
    return trace, det


def oracle_log_det(A: np.ndarray, normals: np.ndarray) -> float:
    """Grid search over (r, theta) followed by constrained local refinement."""
    r, theta = np.meshgrid(np.arange(-5.0, 5.0, 0.02), np.arange(0.0, np.pi, 0.005))
    S = _shapes(r, theta)
    trace, det = _lmi_margins(S, A)
    feasible = (trace <= 0.0) & (det >= 0.0)
    support = np.einsum("ji,...ik,jk->...j", normals, S, normals).max(axis=-1)
    value = np.where(feasible, -2.0 * np.log(support), -np.inf)
    best = np.unravel_index(np.argmax(value), value.shape)
    grid_best = float(value[best])

    def support_log(z):
        S = _shapes(np.array(z[0]), np.array(z[1]))
        return np.log(np.einsum("ji,ik,jk->j", normals, S, normals))

    def lmi(z):
        trace, det = _lmi_margins(_shapes(np.array(z[0]), np.array(z[1])), A)
        return np.array([-float(trace), float(det)])

    start = np.array([r[best], theta[best], grid_best / 2.0])
    result = minimize(
        lambda z: -2.0 * z[2],
        start,
        method="SLSQP",
        constraints=[
            {"type": "ineq", "fun": lambda z: -(z[2] + support_log(z))},
            {"type": "ineq", "fun": lmi},
        ],
        options={"ftol": 1e-12, "maxiter": 500},
    )
    z = result.x
    if np.all(-(z[2] + support_log(z)) >= -1e-9) and np.all(lmi(z) >= -1e-9):
        return max(grid_best, 2.0 * float(z[2]))
    return grid_best


def box(half_widths) -> PolyhedralConstraints:
    eye = np.diag(1.0 / np.asarray(half_widths, dtype=float))
    return PolyhedralConstraints(np.vstack([eye, -eye]))


ORACLE_INSTANCES = [
    (np.array([[-1.0, 0.0], [0.0, -1.0]]), box([1.0, 1.0])),
    (np.array([[-0.5, 1.0], [-1.0, -0.5]]), box([1.0, 1.0])),
    (np.array([[0.0, 1.0], [-1.0, -2.0]]), box([1.0, 1.0])),
    (np.array([[-1.0, 5.0], [0.0, -1.0]]), box([1.0, 1.0])),
    (np.array([[0.0, 1.0], [-2.0, -1.0]]), box([2.0, 0.5])),
    (
        np.array([[-2.0, 0.0], [0.0, -0.5]]),
        PolyhedralConstraints(
            np.vstack([np.eye(2), -np.eye(2), [[1.0 / 1.5, 1.0 / 1.5]]])
        ),
    ),
]


class TestClosedLoopMatrix:
    """Test suite for A_SC = A - B K."""

    def test_scalar_integrator(self):
        loop = closed_loop_matrix(LinearPlant(A=[[0.0]], B=[[1.0]]), np.array([[1.0]]))
        assert loop.matrix[0, 0] == -1.0
        assert loop.max_real_part == pytest.approx(-1.0)

    def test_double_integrator(self):
        plant = LinearPlant(A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]])
        loop = closed_loop_matrix(plant, np.array([[1.0, 2.0]]))
        assert np.array_equal(loop.matrix, [[0.0, 1.0], [-1.0, -2.0]])
        assert loop.max_real_part == pytest.approx(-1.0, abs=1e-6)

    def test_zero_gain_is_not_hurwitz(self):
        with pytest.raises(HurwitzViolation):
            closed_loop_matrix(LinearPlant(A=[[0.0]], B=[[1.0]]), np.array([[0.0]]))

    def test_gain_shape_checked(self):
        with pytest.raises(ConfigError):
            closed_loop_matrix(LinearPlant(A=[[0.0]], B=[[1.0]]), np.ones((2, 2)))

    def test_plant_rejects_mismatched_rows(self):
        with pytest.raises(ConfigError):
            LinearPlant(A=np.zeros((2, 2)), B=np.zeros((3, 1)))


class TestLyapunovFallback:
    """Test suite for the scaled Lyapunov ellipsoid."""

    def test_identity_case(self, unit_box):
        E = lyapunov_fallback_ellipsoid(-np.eye(2), unit_box, W=2.0 * np.eye(2))
        assert np.allclose(E.Q, np.eye(2))

    def test_scalar_scaling(self):
        E = lyapunov_fallback_ellipsoid(
            np.array([[-1.0]]), PolyhedralConstraints([[2.0], [-2.0]]), W=np.array([[2.0]])
        )
        assert E.Q[0, 0] == pytest.approx(0.25)

    def test_passes_verification(self, unit_box):
        A = np.array([[0.0, 1.0], [-1.0, -2.0]])
        E = lyapunov_fallback_ellipsoid(A, unit_box)
        assert verify_ellipsoid(E.Q, A, unit_box).passed

    def test_rejects_unstable(self, unit_box):
        with pytest.raises(NotHurwitz):
            lyapunov_fallback_ellipsoid(np.eye(2), unit_box)


class TestSynthesizeMaxEllipsoid:
    """Test suite for the log-det barrier solver."""

    def test_unit_box_identity(self, unit_box):
        E = synthesize_max_ellipsoid(-np.eye(2), unit_box)
        assert np.allclose(E.Q, np.eye(2), atol=1e-2)
        assert E.log_volume == pytest.approx(0.0, abs=1e-2)

    def test_scalar_interval(self):
        E = synthesize_max_ellipsoid(np.array([[-1.0]]), PolyhedralConstraints([[1.0], [-1.0]]))
        assert E.Q[0, 0] == pytest.approx(1.0, abs=1e-3)

    def test_rotating_dynamics_match_grid(self, unit_box):
        A = np.array([[-0.5, 1.0], [-1.0, -0.5]])
        E = synthesize_max_ellipsoid(A, unit_box)
        assert np.allclose(E.Q, np.eye(2), atol=1e-2)

    @pytest.mark.parametrize("A,constraints", ORACLE_INSTANCES)
    def test_log_det_matches_oracle(self, A, constraints):
        E = synthesize_max_ellipsoid(A, constraints)
        assert E.log_volume == pytest.approx(oracle_log_det(A, constraints.normals), abs=1e-2)

    @pytest.mark.parametrize("A,constraints", ORACLE_INSTANCES)
    def test_result_satisfies_invariants(self, A, constraints):
        E = synthesize_max_ellipsoid(A, constraints)
        report = verify_ellipsoid(E.Q, A, constraints)
        assert report.passed
        assert np.allclose(E.P @ E.Q, np.eye(2), atol=1e-7)

    @pytest.mark.parametrize("A,constraints", ORACLE_INSTANCES)
    def test_never_below_fallback(self, A, constraints):
        best = synthesize_max_ellipsoid(A, constraints)
        fallback = lyapunov_fallback_ellipsoid(A, constraints)
        assert best.log_volume >= fallback.log_volume - 1e-6

    def test_boundary_flow_points_inward(self, rng):
        A = np.array([[0.0, 1.0], [-2.0, -1.0]])
        E = synthesize_max_ellipsoid(A, box([2.0, 0.5]))
        L = np.linalg.cholesky(E.Q)
        directions = rng.standard_normal((1000, 2))
        points = (directions / np.linalg.norm(directions, axis=1, keepdims=True)) @ L.T
        W = A.T @ E.P + E.P @ A
        rates = np.einsum("ij,jk,ik->i", points, W, points)
        assert np.all(rates <= 1e-8)
        faces = box([2.0, 0.5]).normals
        assert np.all(points @ faces.T <= 1.0 + 1e-8)

    def test_trajectories_stay_inside(self, rng):
        A = np.array([[0.0, 1.0], [-1.0, -2.0]])
        E = synthesize_max_ellipsoid(A, box([1.0, 1.0]))
        L = np.linalg.cholesky(E.Q)
        directions = rng.standard_normal((100, 2))
        radii = np.sqrt(rng.uniform(size=(100, 1)))
        starts = radii * directions / np.linalg.norm(directions, axis=1, keepdims=True) @ L.T
        times = np.linspace(0.0, 10.0, 101)
        maps = [matrix_exponential(A, t) for t in times]
        for x0 in starts:
            values = [float(x @ E.P @ x) for x in (F @ x0 for F in maps)]
            assert max(values) <= 1.0 + 1e-7
            assert np.all(np.diff(values) <= 1e-7)

    def test_decay_margin_shrinks_volume(self, unit_box):
        A = np.array([[0.0, 1.0], [-1.0, -2.0]])
        plain = synthesize_max_ellipsoid(A, unit_box)
        margin = synthesize_max_ellipsoid(A, unit_box, SolverOptions(decay_fraction=0.5))
        assert margin.log_volume <= plain.log_volume + 1e-9
        shifted = A + 0.5 * np.eye(2)
        assert verify_ellipsoid(margin.Q, shifted, unit_box).lmi_ok

    def test_large_feasibility_slack_still_gives_tight_certificate(self, unit_box):
        A = np.array([[0.0, 1.0], [-1.0, -2.0]])
        tight = synthesize_max_ellipsoid(A, unit_box)
        loose = synthesize_max_ellipsoid(A, unit_box, SolverOptions(tol_feas=0.2))
        report = verify_ellipsoid(loose.Q, A, unit_box)
        assert report.passed
        assert report.max_containment == pytest.approx(1.0, abs=1e-9)
        assert loose.log_volume <= tight.log_volume + 1e-2
        assert loose.log_volume >= lyapunov_fallback_ellipsoid(A, unit_box).log_volume - 1e-9

    def test_iteration_cap_reports_last_iterate(self, unit_box):
        with pytest.raises(SolverFailure) as info:
            synthesize_max_ellipsoid(-np.eye(2), unit_box, SolverOptions(max_iter=1))
        assert isinstance(info.value.last_iterate, InvariantEllipsoid)

    def test_rejects_unstable(self, unit_box):
        with pytest.raises(NotHurwitz):
            synthesize_max_ellipsoid(np.array([[0.1, 0.0], [0.0, -1.0]]), unit_box)

    def test_dimension_mismatch(self, unit_box):
        with pytest.raises(ConfigError):
            synthesize_max_ellipsoid(-np.eye(3), unit_box)


class TestBarrierFeasibility:
    """Test suite for the feasibility slack of the barrier."""

    @pytest.fixture
    def normals(self, unit_box):
        return unit_box.normals

    def test_iterate_needs_more_than_slack(self, normals):
        strict = _LogDetBarrier(-np.eye(2), normals, tol_feas=0.1)
        lenient = _LogDetBarrier(-np.eye(2), normals, tol_feas=1e-8)
        q = strict.to_vector(0.95 * np.eye(2))
        assert strict.evaluate(q, 1.0) is None
        assert lenient.evaluate(q, 1.0) is not None

    @pytest.mark.parametrize("scale, tol, expected", [
        (1.0, 1e-8, True),
        (1.001, 1e-8, False),
        (1.001, 1e-2, True),
    ])
    def test_rescaled_face_check(self, normals, scale, tol, expected):
        barrier = _LogDetBarrier(-np.eye(2), normals)
        assert barrier.rescaled_ok(scale * np.eye(2), tol) is expected

    def test_rescaled_lmi_check(self, normals):
        barrier = _LogDetBarrier(np.array([[0.1, 0.0], [0.0, -1.0]]), normals)
        assert not barrier.rescaled_ok(0.5 * np.eye(2), 1e-8)



class TestVerifyEllipsoid:
    """Test suite for invariant verification."""

    def test_identity_passes(self, unit_box):
        report = verify_ellipsoid(np.eye(2), -np.eye(2), unit_box)
        assert report.passed
        assert report.lmi_max_eigenvalue == pytest.approx(-2.0)
        assert report.max_containment == pytest.approx(1.0)

    def test_oversized_ball_fails_containment(self, unit_box):
        report = verify_ellipsoid(4.0 * np.eye(2), -np.eye(2), unit_box)
        assert not report.containment_ok
        assert report.max_containment == pytest.approx(4.0)
        assert not report.passed

    def test_unstable_dynamics_fail_lmi(self, unit_box):
        report = verify_ellipsoid(np.eye(2), np.eye(2), unit_box)
        assert not report.lmi_ok
        assert report.lmi_max_eigenvalue == pytest.approx(2.0)

    def test_saturation_peaks(self, unit_box):
        report = verify_ellipsoid(
            np.eye(2), -np.eye(2), unit_box,
            K=np.array([[0.3, 0.4]]), u_lower=np.array([-1.0]), u_upper=np.array([1.0]),
        )
        assert report.saturation_peaks == [pytest.approx(0.5)]
        assert report.saturation_ok


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--cov=src.certification.ellipsoid"])
