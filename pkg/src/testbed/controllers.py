"""
Mission and safety control laws.

Author: Dr. Sofia Lindqvist
Date: 2024-02-20
"""

from typing import Optional

import numpy as np


class StateFeedback:
    """u = -K (x - x_ref).

    Args:
        K: Gain (m x n)
        reference: Set point in plant deviation coordinates, origin by default
    """

    def __init__(self, K: np.ndarray, reference: Optional[np.ndarray] = None):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        n = self.K.shape[1]
        self.reference = np.zeros(n) if reference is None else np.asarray(reference, float)

    def reset(self) -> None:
        """Stateless law; nothing to clear."""

    def command(self, x: np.ndarray, dt: float) -> np.ndarray:
        return -self.K @ (np.asarray(x, dtype=float) - self.reference)

    def retargeted(self, reference: np.ndarray) -> "StateFeedback":
        return StateFeedback(self.K, reference)


class IntegralStateFeedback:
    """LQR law with integral action on selected outputs.

    The augmented state is [x - x_ref; eta] with eta' = C (x - x_ref), and
    u = -K_aug [x - x_ref; eta]. The integrator advances by forward Euler
    after each command, so the first command after ``reset`` sees eta = 0.

    Args:
        K_aug: Gain (m x (n + p))
        C: Output selection of the integrated error (p x n)
        reference: Set point in plant deviation coordinates

    Example:
        >>> law = IntegralStateFeedback(np.zeros((1, 2)), np.array([[1.0]]))
        >>> float(law.command(np.array([0.3]), 0.01)[0]) == 0.0
        True
    """

    def __init__(
        self,
        K_aug: np.ndarray,
        C: np.ndarray,
        reference: Optional[np.ndarray] = None
    ):
        self.K_aug = np.atleast_2d(np.asarray(K_aug, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        n = self.C.shape[1]
        if self.K_aug.shape[1] != n + self.C.shape[0]:
            raise ValueError(
                f"K_aug has {self.K_aug.shape[1]} columns, expected {n + self.C.shape[0]}"
            )
        self.reference = np.zeros(n) if reference is None else np.asarray(reference, float)
        self.integral = np.zeros(self.C.shape[0])

    def reset(self) -> None:
        self.integral = np.zeros(self.C.shape[0])

    def command(self, x: np.ndarray, dt: float) -> np.ndarray:
        error = np.asarray(x, dtype=float) - self.reference
        u = -self.K_aug @ np.concatenate([error, self.integral])
        self.integral = self.integral + dt * (self.C @ error)
        return u

    def retargeted(self, reference: np.ndarray) -> "IntegralStateFeedback":
        return IntegralStateFeedback(self.K_aug, self.C, reference)
