"""
Attack library for the rejuvenation testbed.

An attack overrides the control input while it is active and the
communication gate lets it through:

- turn_off: all actuators off (every rotor at zero thrust on the quadrotor)
- take_over: the mission law retargeted to an attacker-chosen equilibrium
- random_box: a uniformly drawn corner of the protected control box each step

Author: Dr. Sofia Lindqvist
Date: 2024-02-21
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Protocol, Union

import numpy as np
import structlog

from ..certification.reachability import ControlPolytope
from .controllers import IntegralStateFeedback, StateFeedback

logger = structlog.get_logger(__name__)

TIME_TOL = 1e-9

MissionLaw = Union[StateFeedback, IntegralStateFeedback]


class AttackKind(str, Enum):
    TURN_OFF = "turn_off"
    TAKE_OVER = "take_over"
    RANDOM_BOX = "random_box"


class AttackPolicy(Protocol):
    kind: AttackKind

    def reset(self) -> None: ...

    def command(self, x: np.ndarray, dt: float) -> np.ndarray: ...


class TurnOff:
    """Constant input that switches every actuator off."""

    kind = AttackKind.TURN_OFF

    def __init__(self, off_input: np.ndarray):
        self.off_input = np.asarray(off_input, dtype=float)

    def reset(self) -> None:
        pass

    def command(self, x: np.ndarray, dt: float) -> np.ndarray:
        return self.off_input.copy()


class TakeOver:
    """Mission law steered to a different equilibrium.

    Carries its own integrator state, reset whenever the attack (re)starts.
    """

    kind = AttackKind.TAKE_OVER

    def __init__(self, law: MissionLaw, target: np.ndarray):
        self.law = law.retargeted(np.asarray(target, dtype=float))

    def reset(self) -> None:
        self.law.reset()

    def command(self, x: np.ndarray, dt: float) -> np.ndarray:
        return self.law.command(x, dt)


class RandomBox:
    """Uniformly random corner of the admissible control box, seeded."""

    kind = AttackKind.RANDOM_BOX

    def __init__(self, limits: ControlPolytope, seed: Union[int, List[int], None] = 0):
        self.limits = limits
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def reset(self) -> None:
        """Corner sequence continues; only a new instance restarts it."""

    def command(self, x: np.ndarray, dt: float) -> np.ndarray:
        pick = self.rng.integers(0, 2, size=self.limits.m).astype(bool)
        return np.where(pick, self.limits.upper, self.limits.lower)


@dataclass
class AttackWindow:
    """Activation interval of one attack.

    Attributes:
        policy: What the attacker commands while active
        start_time: Activation time (s)
        duration: Active duration (s), infinite by default
    """
    policy: AttackPolicy
    start_time: float = 0.0
    duration: float = math.inf

    @property
    def kind(self) -> AttackKind:
        return self.policy.kind

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def covers(self, t: float) -> bool:
        return self.start_time - TIME_TOL <= t < self.end_time - TIME_TOL


@dataclass
class AttackSchedule:
    """Timed sequence of attacks; the earliest window covering t wins."""
    windows: List[AttackWindow] = field(default_factory=list)
    _current: Optional[AttackWindow] = field(default=None, init=False, repr=False)

    def active(self, t: float) -> Optional[AttackWindow]:
        for window in self.windows:
            if window.covers(t):
                if window is not self._current:
                    window.policy.reset()
                    logger.debug("attack_window_opened", kind=window.kind.value, t=t)
                self._current = window
                return window
        self._current = None
        return None

    def is_active(self, t: float) -> bool:
        return any(window.covers(t) for window in self.windows)

    def intervals(self) -> List[tuple]:
        return [(w.kind.value, w.start_time, w.end_time) for w in self.windows]


def build_attack(
    kind: Union[str, AttackKind],
    off_input: Optional[np.ndarray] = None,
    law: Optional[MissionLaw] = None,
    target: Optional[np.ndarray] = None,
    limits: Optional[ControlPolytope] = None,
    seed: Union[int, List[int], None] = 0
) -> AttackPolicy:
    """Construct an attack policy from its kind and the context it needs.

    Raises:
        ValueError: If a context item required by ``kind`` is missing
    """
    kind = AttackKind(kind)
    if kind is AttackKind.TURN_OFF:
        if off_input is None:
            raise ValueError("turn_off needs the actuator-off input")
        return TurnOff(off_input)
    if kind is AttackKind.TAKE_OVER:
        if law is None or target is None:
            raise ValueError("take_over needs the mission law and a target state")
        return TakeOver(law, target)
    if limits is None:
        raise ValueError("random_box needs the protected control box")
    return RandomBox(limits, seed)


def attack_input(policy: AttackPolicy, x: np.ndarray, dt: float) -> np.ndarray:
    """Control override the attacker injects this step."""
    return policy.command(x, dt)
