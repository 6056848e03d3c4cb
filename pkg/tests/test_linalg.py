"""
Unit tests for the dense linear-algebra kernels.

Author: Dr. Elena Voss
Date: 2024-03-04
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import linalg as la

from src.certification.errors import MatrixExponentialOverflow
from src.certification.linalg import (
    is_symmetric,
    matrix_exponential,
    solve_lyapunov,
    spectral_abscissa,
    zoh_discretize,
)


def series_exponential(M: np.ndarray, terms: int = 60) -> np.ndarray:
    """Truncated Taylor series, accurate for ||M|| <= 1."""
    result = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        result = result + term
    return result


class TestMatrixExponential:
    """Test suite for the scaling-and-squaring exponential."""

    def test_zero_matrix_gives_identity(self):
        assert np.array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))

    def test_nilpotent_block(self):
        E = matrix_exponential(np.array([[0.0, 1.0], [0.0, 0.0]]), 2.5)
        assert np.allclose(E, [[1.0, 2.5], [0.0, 1.0]], atol=1e-14)

    def test_scalar_decay(self):
        assert matrix_exponential(np.array([[-1.0]]), 3.0)[0, 0] == pytest.approx(
            math.exp(-3.0), rel=1e-13
        )

    def test_rotation_generator(self):
        theta = 0.7
        E = matrix_exponential(np.array([[0.0, -1.0], [1.0, 0.0]]), theta)
        expected = np.array([[math.cos(theta), -math.sin(theta)],
                             [math.sin(theta), math.cos(theta)]])
        assert np.allclose(E, expected, atol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (4, 4), elements=st.floats(-0.25, 0.25)))
    def test_matches_series_on_unit_norm_ball(self, M):
        assert np.allclose(matrix_exponential(M), series_exponential(M), atol=1e-12, rtol=0)

    @pytest.mark.parametrize("scale", [0.01, 0.5, 2.0, 10.0, 40.0])
    def test_agrees_with_scipy_across_pade_degrees(self, rng, scale):
        M = rng.standard_normal((5, 5))
        M *= scale / np.linalg.norm(M, 1)
        expected = la.expm(M)
        error = np.linalg.norm(matrix_exponential(M) - expected) / np.linalg.norm(expected)
        assert error < 1e-11

    def test_inverse_property(self, rng):
        M = rng.standard_normal((6, 6))
        product = matrix_exponential(M, 0.8) @ matrix_exponential(M, -0.8)
        assert np.allclose(product, np.eye(6), atol=1e-10)

    def test_norm_cap_raises_overflow(self):
        with pytest.raises(MatrixExponentialOverflow):
            matrix_exponential(np.eye(2) * 100.0, 1.0, norm_cap=50.0)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            matrix_exponential(np.zeros((2, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            matrix_exponential(np.array([[np.nan]]))


class TestLyapunovAndHelpers:
    """Test suite for Lyapunov solves and symmetric helpers."""

    def test_lyapunov_identity_case(self):
        P = solve_lyapunov(-np.eye(2), 2.0 * np.eye(2))
        assert np.allclose(P, np.eye(2))

    def test_lyapunov_residual(self, rng):
        A = rng.standard_normal((4, 4)) - 4.0 * np.eye(4)
        W = np.eye(4)
        P = solve_lyapunov(A, W)
        assert np.allclose(A.T @ P + P @ A, -W, atol=1e-10)
        assert is_symmetric(P)

    def test_spectral_abscissa(self):
        assert spectral_abscissa(np.diag([-3.0, -0.5, -1.0])) == pytest.approx(-0.5)

    def test_is_symmetric_relative_tolerance(self):
        X = np.array([[1.0, 2.0], [2.0 + 1e-12, 1.0]])
        assert is_symmetric(X, rtol=1e-9)
        assert not is_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestZeroOrderHold:
    """Test suite for exact discretization."""

    def test_integrator(self):
        Ad, Bd = zoh_discretize(np.array([[0.0]]), np.array([[1.0]]), 0.01)
        assert Ad[0, 0] == pytest.approx(1.0)
        assert Bd[0, 0] == pytest.approx(0.01)

    def test_double_integrator(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        B = np.array([[0.0], [1.0]])
        Ad, Bd = zoh_discretize(A, B, 0.2)
        assert np.allclose(Ad, [[1.0, 0.2], [0.0, 1.0]])
        assert np.allclose(Bd, [[0.02], [0.2]])


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--cov=src.certification.linalg"])
