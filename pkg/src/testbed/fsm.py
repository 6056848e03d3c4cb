"""
Rejuvenation mode machine.

Mission control (MC) runs with communication enabled until the protected
refresh clock expires; the software refresh (SR) then runs for T_SR with
communication off; safety control (SC) runs the trusted law without the
protected limits until the state is back inside E_eps, after which MC
resumes with a fresh clock.

Author: Dr. Sofia Lindqvist
Date: 2024-02-22
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Literal, Optional, Tuple

import numpy as np
import structlog

from ..certification.errors import ConfigError
from ..certification.reachability import ControlPolytope

logger = structlog.get_logger(__name__)

STEP_TOL = 1e-9


class Mode(str, Enum):
    MC = "MC"
    SR = "SR"
    SC = "SC"


class ControlSource(str, Enum):
    MISSION = "mission"
    ATTACKER = "attacker"
    HOLD = "hold"
    ZERO = "zero"
    SAFETY = "safety"


def _steps(duration: float, dt: float) -> int:
    return int(round(duration / dt))


@dataclass
class RejuvenationConfig:
    """Timing parameters and protected limits of the mode machine.

    Attributes:
        T_SR: Software-refresh duration (s)
        t_r: Refresh-clock period, T_UC - T_SR (s)
        epsilon: Inner safe-set level
        mc_limits: Protected MC/SR control box
        sc_limits: Full control box used by SC
        sr_input: Plant input during SR without a latched attack
    """
    T_SR: float
    t_r: float
    epsilon: float
    mc_limits: ControlPolytope
    sc_limits: ControlPolytope
    sr_input: Literal["hold", "zero"] = "hold"

    def __post_init__(self) -> None:
        if self.t_r <= 0.0:
            raise ConfigError(f"refresh period t_r must be positive, got {self.t_r}", "fsm")
        if self.T_SR <= 0.0:
            raise ConfigError(f"T_SR must be positive, got {self.T_SR}", "fsm")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}", "fsm")
        if not self.mc_limits.within(self.sc_limits):
            raise ConfigError("MC/SR limits must lie inside the SC limits", "fsm")
        if self.sr_input not in ("hold", "zero"):
            raise ConfigError(f"unknown SR input policy '{self.sr_input}'", "fsm")

    def check_step(self, dt: float) -> None:
        """Validate that the mode durations resolve on the step grid.

        Raises:
            ConfigError: If dt > t_r, dt > T_SR, or either duration is not an
                integer multiple of dt
        """
        if dt <= 0.0:
            raise ConfigError(f"time step must be positive, got {dt}", "fsm")
        if dt > self.t_r + STEP_TOL or dt > self.T_SR + STEP_TOL:
            raise ConfigError(
                f"time step {dt} exceeds t_r={self.t_r} or T_SR={self.T_SR}", "fsm"
            )
        for name, value in (("T_SR", self.T_SR), ("t_r", self.t_r)):
            if abs(value / dt - _steps(value, dt)) > STEP_TOL * max(1.0, value / dt):
                raise ConfigError(f"{name}={value} is not a multiple of dt={dt}", "fsm")


@dataclass(frozen=True)
class ModeEvent:
    """One mode transition; ``duration`` is the time spent in ``source``."""
    t: float
    source: Optional[Mode]
    target: Mode
    reason: str
    duration: float = 0.0


@dataclass
class FsmState:
    """Protected primitives of the rejuvenation machine.

    Attributes:
        mode: Current operating mode
        refresh_clock_remaining: Time left on the refresh clock (MC)
        sr_remaining: Time left in the software refresh (SR)
        comm_enabled: External communication switch
        limits_enabled: Protected control limits switch
        sc_elapsed: Time spent in the current SC phase
        attack_latched: An attack reached the plant during the last MC window
        mode_history: Transition log; shared between successive states and
            never mutated in place once a state has been stepped
    """
    mode: Mode
    refresh_clock_remaining: float
    comm_enabled: bool
    limits_enabled: bool
    sc_elapsed: float = 0.0
    sr_remaining: float = 0.0
    attack_latched: bool = False
    mode_history: List[ModeEvent] = field(default_factory=list)

    def snapshot(self) -> "FsmState":
        """Shallow copy; the history list is shared until the next transition."""
        return replace(self)


def initial_fsm_state(
    x: np.ndarray,
    P: np.ndarray,
    cfg: RejuvenationConfig,
    t: float = 0.0
) -> FsmState:
    """Start in SC when x(0) is outside E_eps, otherwise in MC with a full clock."""
    x = np.asarray(x, dtype=float)
    if float(x @ P @ x) > cfg.epsilon:
        state = FsmState(mode=Mode.SC, refresh_clock_remaining=0.0,
                         comm_enabled=False, limits_enabled=False)
    else:
        state = FsmState(mode=Mode.MC, refresh_clock_remaining=cfg.t_r,
                         comm_enabled=True, limits_enabled=True)
    state.mode_history.append(ModeEvent(t=t, source=None, target=state.mode, reason="start"))
    return state


def _enter(state: FsmState, target: Mode, t: float, reason: str, duration: float) -> None:
    event = ModeEvent(t=t, source=state.mode, target=target, reason=reason, duration=duration)
    state.mode_history = state.mode_history + [event]
    state.mode = target


def control_source(fsm: FsmState, effective_attack: bool, cfg: RejuvenationConfig) -> ControlSource:
    """Who computes the plant input this step."""
    if fsm.mode is Mode.SC:
        return ControlSource.SAFETY
    if effective_attack:
        return ControlSource.ATTACKER
    if fsm.mode is Mode.MC:
        return ControlSource.MISSION
    return ControlSource.HOLD if cfg.sr_input == "hold" else ControlSource.ZERO


def fsm_step(
    fsm: FsmState,
    x: np.ndarray,
    P: np.ndarray,
    cfg: RejuvenationConfig,
    dt: float,
    t: float = 0.0,
    attack_effective: bool = False
) -> Tuple[FsmState, ControlSource]:
    """Advance the machine after one executed step of length dt.

    The step's dt is consumed from the running mode's timer, then
    transitions resolve against the post-step state x at time t:

    - MC: refresh clock expires -> SR, communication off
    - SR: T_SR elapsed -> SC, limits off, attack latch cleared
    - SC: x^T P x <= epsilon -> MC, clock <- t_r, communication and limits on

    An SC phase entered with x already in E_eps ends in the same call.

    Args:
        fsm: State before the step (left untouched)
        x: Plant state at the end of the step
        P: Lyapunov matrix of E_C
        cfg: Timing configuration
        dt: Step length
        t: Time at the end of the step
        attack_effective: The attack reached the plant during this step

    Returns:
        (next state, control source for the next step without an attack)

    Raises:
        ConfigError: If dt does not resolve the mode durations
    """
    cfg.check_step(dt)
    state = fsm.snapshot()

    if state.mode is Mode.MC:
        if attack_effective:
            state.attack_latched = True
        remaining = _steps(state.refresh_clock_remaining, dt) - 1
        state.refresh_clock_remaining = max(remaining, 0) * dt
        if remaining <= 0:
            state.comm_enabled = False
            state.sr_remaining = cfg.T_SR
            _enter(state, Mode.SR, t, "refresh_clock_timeout", cfg.t_r)
    elif state.mode is Mode.SR:
        remaining = _steps(state.sr_remaining, dt) - 1
        state.sr_remaining = max(remaining, 0) * dt
        if remaining <= 0:
            state.limits_enabled = False
            state.attack_latched = False
            state.sc_elapsed = 0.0
            _enter(state, Mode.SC, t, "refresh_complete", cfg.T_SR)
    else:
        state.sc_elapsed = (_steps(state.sc_elapsed, dt) + 1) * dt

    if state.mode is Mode.SC and float(np.asarray(x) @ P @ np.asarray(x)) <= cfg.epsilon:
        state.refresh_clock_remaining = cfg.t_r
        state.comm_enabled = True
        state.limits_enabled = True
        _enter(state, Mode.MC, t, "inner_set_reached", state.sc_elapsed)

    return state, control_source(state, False, cfg)


def apply_limits(u: np.ndarray, limits: ControlPolytope) -> np.ndarray:
    """Componentwise clamp of u into [lower, upper]."""
    u = np.asarray(u, dtype=float)
    if u.shape != limits.lower.shape:
        raise ValueError(f"input has shape {u.shape}, limits have {limits.lower.shape}")
    return np.clip(u, limits.lower, limits.upper)


def gate_communication(fsm: FsmState, attack_active: bool) -> bool:
    """Whether an active attack reaches the plant.

    Attacks pass while communication is enabled, and keep control through
    SR when they were latched during the preceding MC window.
    """
    return bool(attack_active and (fsm.comm_enabled or (fsm.mode is Mode.SR and fsm.attack_latched)))


class RejuvenationMachine:
    """Single-owner wrapper around the pure transition function.

    Args:
        cfg: Timing configuration
        P: Lyapunov matrix of E_C
        dt: Simulation step
        x0: Initial state
    """

    def __init__(self, cfg: RejuvenationConfig, P: np.ndarray, dt: float, x0: np.ndarray):
        cfg.check_step(dt)
        self.cfg = cfg
        self.P = np.asarray(P, dtype=float)
        self.dt = dt
        self.state = initial_fsm_state(x0, self.P, cfg)

    @property
    def mode(self) -> Mode:
        return self.state.mode

    @property
    def limits(self) -> ControlPolytope:
        return self.cfg.mc_limits if self.state.limits_enabled else self.cfg.sc_limits

    def gate(self, attack_active: bool) -> bool:
        return gate_communication(self.state, attack_active)

    def source(self, effective_attack: bool) -> ControlSource:
        return control_source(self.state, effective_attack, self.cfg)

    def step(self, x: np.ndarray, t: float, attack_effective: bool = False) -> List[ModeEvent]:
        """Advance one step; returns the transitions it produced."""
        before = len(self.state.mode_history)
        self.state, _ = fsm_step(
            self.state, x, self.P, self.cfg, self.dt, t=t, attack_effective=attack_effective
        )
        events = self.state.mode_history[before:]
        for event in events:
            logger.debug(
                "mode_transition",
                t=event.t,
                source=event.source.value if event.source else None,
                target=event.target.value,
                reason=event.reason,
            )
        return events

    @property
    def history(self) -> List[ModeEvent]:
        return list(self.state.mode_history)
