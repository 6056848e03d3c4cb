"""
Nonlinear 12-state quadrotor testbed.

Rigid-body Newton-Euler model in a z-up inertial frame with ZYX Euler
angles, hover linearization, plus-geometry mixer and a fixed-step RK4
integrator. The plant input used by the certification layer is the wrench
deviation from hover, u = [F - m g, tau_x, tau_y, tau_z].

State layout:
    0-2   position (x, y, z)          m
    3-5   attitude (roll, pitch, yaw) rad
    6-8   velocity (vx, vy, vz)        m/s
    9-11  body rates (p, q, r)         rad/s

Author: Dr. Sofia Lindqvist
Date: 2024-02-19
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import structlog
from pydantic import BaseModel, Field, field_validator

from ..certification.ellipsoid import LinearPlant, PolyhedralConstraints
from ..certification.errors import NonFiniteState

logger = structlog.get_logger(__name__)

POS = slice(0, 3)
ATT = slice(3, 6)
VEL = slice(6, 9)
RATE = slice(9, 12)
STATE_DIM = 12
INPUT_DIM = 4
GIMBAL_MARGIN = 1e-3

STATE_LABELS = (
    "x", "y", "z", "roll", "pitch", "yaw",
    "vx", "vy", "vz", "p", "q", "r",
)


class QuadrotorParams(BaseModel):
    """Physical parameters of the plus-configuration quadrotor."""

    mass: float = Field(default=1.0, gt=0.0, description="kg")
    inertia: Tuple[float, float, float] = Field(default=(0.01, 0.01, 0.02))
    arm_length: float = Field(default=0.25, gt=0.0, description="m")
    gravity: float = Field(default=9.81, gt=0.0, description="m/s^2")
    motor_max_thrust: float = Field(default=4.0, gt=0.0, description="N per motor")
    motor_max_torque: float = Field(default=0.05, gt=0.0, description="N m yaw authority")
    geometry: str = Field(default="+", pattern=r"^\+$")

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity

    @property
    def inertia_matrix(self) -> np.ndarray:
        return np.diag(self.inertia)

    @property
    def yaw_coefficient(self) -> float:
        """Reaction torque per newton of rotor thrust."""
        return self.motor_max_torque / self.motor_max_thrust

    @field_validator("inertia")
    @classmethod
    def _positive_inertia(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if min(value) <= 0.0:
            raise ValueError("inertia entries must be positive")
        return value


@dataclass
class WrenchCommand:
    """Collective thrust F (N) and body torques tau (N m)."""
    F: float
    tau: np.ndarray

    def __post_init__(self) -> None:
        self.tau = np.asarray(self.tau, dtype=float).reshape(3)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.F], self.tau])

    @classmethod
    def from_vector(cls, w: np.ndarray) -> "WrenchCommand":
        return cls(F=float(w[0]), tau=np.asarray(w[1:4], dtype=float))


def wrench_from_input(u: np.ndarray, params: QuadrotorParams) -> WrenchCommand:
    """Hover-deviation input u -> absolute wrench."""
    return WrenchCommand(F=float(u[0]) + params.hover_thrust, tau=np.asarray(u[1:4]))


def input_from_wrench(w: WrenchCommand, params: QuadrotorParams) -> np.ndarray:
    return np.concatenate([[w.F - params.hover_thrust], w.tau])


def rotation_matrix(phi: float, theta: float, psi: float) -> np.ndarray:
    """Body-to-inertial rotation R = Rz(psi) Ry(theta) Rx(phi)."""
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array([
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])


def euler_rate_matrix(phi: float, theta: float) -> np.ndarray:
    """Map body rates to Euler angle rates."""
    cf, sf = math.cos(phi), math.sin(phi)
    ct, tt = math.cos(theta), math.tan(theta)
    return np.array([
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf / ct, cf / ct],
    ])


def near_gimbal_lock(x: np.ndarray) -> bool:
    return abs(float(x[4])) > math.pi / 2 - GIMBAL_MARGIN


def dynamics(x: np.ndarray, w: WrenchCommand, params: QuadrotorParams) -> np.ndarray:
    """State derivative of the rigid-body model.

    p' = v,  v' = -g e_z + (F/m) R e_z,  Euler' = W(phi, theta) omega,
    I omega' = tau - omega x (I omega).

    Example:
        >>> params = QuadrotorParams()
        >>> hover = WrenchCommand(F=params.hover_thrust, tau=np.zeros(3))
        >>> bool(np.all(dynamics(np.zeros(12), hover, params) == 0.0))
        True
    """
    phi, theta, psi = x[ATT]
    omega = x[RATE]
    inertia = np.asarray(params.inertia)

    dx = np.empty(STATE_DIM)
    dx[POS] = x[VEL]
    dx[ATT] = euler_rate_matrix(phi, theta) @ omega
    thrust_dir = rotation_matrix(phi, theta, psi)[:, 2]
    dx[VEL] = (w.F / params.mass) * thrust_dir
    dx[8] -= params.gravity
    dx[RATE] = (w.tau - np.cross(omega, inertia * omega)) / inertia
    return dx


def linearize_hover(params: QuadrotorParams) -> LinearPlant:
    """Analytic Jacobians of ``dynamics`` at hover, input u = [F - m g, tau].

    Example:
        >>> plant = linearize_hover(QuadrotorParams())
        >>> plant.A[6, 4], plant.A[7, 3]
        (9.81, -9.81)
    """
    g = params.gravity
    Ixx, Iyy, Izz = params.inertia
    A = np.zeros((STATE_DIM, STATE_DIM))
    A[POS, VEL] = np.eye(3)
    A[ATT, RATE] = np.eye(3)
    A[6, 4] = g
    A[7, 3] = -g

    B = np.zeros((STATE_DIM, INPUT_DIM))
    B[8, 0] = 1.0 / params.mass
    B[9, 1] = 1.0 / Ixx
    B[10, 2] = 1.0 / Iyy
    B[11, 3] = 1.0 / Izz
    return LinearPlant(A=A, B=B, x_e=np.zeros(STATE_DIM))


def rk4_step(
    x: np.ndarray,
    w: WrenchCommand,
    dt: float,
    params: QuadrotorParams,
    t: float = 0.0
) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step with the wrench held constant.

    Raises:
        NonFiniteState: If the propagated state is not finite
    """
    k1 = dynamics(x, w, params)
    k2 = dynamics(x + 0.5 * dt * k1, w, params)
    k3 = dynamics(x + 0.5 * dt * k2, w, params)
    k4 = dynamics(x + dt * k3, w, params)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise NonFiniteState(f"quadrotor state became non-finite at t={t:.6g}", t)
    return x_next


class Mixer:
    """Plus-geometry mixer between the wrench and four rotor thrusts.

    Motor order is (front, left, rear, right). Front/rear spin one way and
    left/right the other, so

        F      = T1 + T2 + T3 + T4
        tau_x  = L (T_left - T_right)
        tau_y  = L (T_front - T_rear)
        tau_z  = c_d (T1 - T2 + T3 - T4)

    Args:
        params: Quadrotor parameters (arm length, thrust and torque limits)
    """

    def __init__(self, params: QuadrotorParams):
        self.params = params
        L = params.arm_length
        c = params.yaw_coefficient
        self.matrix = np.array([
            [1.0, 1.0, 1.0, 1.0],
            [0.0, L, 0.0, -L],
            [L, 0.0, -L, 0.0],
            [c, -c, c, -c],
        ])
        self.inverse = np.linalg.inv(self.matrix)

    def thrusts(self, w: WrenchCommand) -> np.ndarray:
        """Unclamped rotor thrusts realizing w."""
        return self.inverse @ w.as_vector()

    def mix(self, w: WrenchCommand) -> Tuple[np.ndarray, bool]:
        """Rotor thrusts clamped to [0, motor_max_thrust].

        Returns:
            (thrusts, saturated)
        """
        raw = self.thrusts(w)
        clamped = np.clip(raw, 0.0, self.params.motor_max_thrust)
        return clamped, bool(np.any(clamped != raw))

    def unmix(self, thrusts: np.ndarray) -> WrenchCommand:
        return WrenchCommand.from_vector(self.matrix @ np.asarray(thrusts, dtype=float))


def hover_constraint_box(
    position: Tuple[float, float, float] = (2.0, 2.0, 5.0),
    angle: float = math.pi / 4,
    velocity: Tuple[float, float, float] = (2.0, 2.0, 5.0),
    rate: float = 5.0
) -> PolyhedralConstraints:
    """Symmetric operating box around hover as 24 normalized half-spaces."""
    bounds = np.concatenate([position, [angle] * 3, velocity, [rate] * 3])
    eye = np.eye(STATE_DIM)
    a = np.vstack([eye, -eye])
    b = np.concatenate([bounds, bounds])
    return PolyhedralConstraints.from_halfspaces(a, b)


class QuadrotorPlant:
    """Simulation adapter: hover-deviation input -> mixer -> RK4.

    The requested wrench is realized through the mixer, so rotor clamping
    shows up in the applied input.
    """

    def __init__(self, params: QuadrotorParams):
        self.params = params
        self.mixer = Mixer(params)
        self.saturation_events = 0

    @property
    def n(self) -> int:
        return STATE_DIM

    @property
    def m(self) -> int:
        return INPUT_DIM

    def applied_input(self, u: np.ndarray) -> Tuple[np.ndarray, bool]:
        thrusts, saturated = self.mixer.mix(wrench_from_input(u, self.params))
        return input_from_wrench(self.mixer.unmix(thrusts), self.params), saturated

    def step(self, x: np.ndarray, u: np.ndarray, dt: float, t: float = 0.0) -> np.ndarray:
        applied, saturated = self.applied_input(u)
        if saturated:
            self.saturation_events += 1
        if near_gimbal_lock(x):
            logger.warning("gimbal_proximity", t=t, pitch=float(x[4]))
        return rk4_step(x, wrench_from_input(applied, self.params), dt, self.params, t)


def lqr_integral_control(
    x_aug: np.ndarray,
    K_aug: np.ndarray,
    params: QuadrotorParams
) -> WrenchCommand:
    """Wrench of the integral LQR law, u = -K_aug x_aug plus hover feedforward.

    Args:
        x_aug: 12 plant states followed by 3 position-error integrals
        K_aug: Gain of shape (4, 15)
        params: Quadrotor parameters

    Example:
        >>> params = QuadrotorParams()
        >>> w = lqr_integral_control(np.zeros(15), np.ones((4, 15)), params)
        >>> w.F == params.hover_thrust
        True
    """
    K_aug = np.atleast_2d(np.asarray(K_aug, dtype=float))
    if K_aug.shape != (INPUT_DIM, STATE_DIM + 3):
        raise ValueError(f"K_aug must be 4x15, got {K_aug.shape}")
    u = -K_aug @ np.asarray(x_aug, dtype=float)
    return wrench_from_input(u, params)


def position_selector() -> np.ndarray:
    """Output matrix picking the three position states for integral action."""
    C = np.zeros((3, STATE_DIM))
    C[:, POS] = np.eye(3)
    return C
