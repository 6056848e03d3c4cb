"""
Feasibility tuning for the uncertain-control period.

When T_UC <= T_SR the timing certificate is infeasible. Two remedies trade
something away for a longer T_UC: shrinking the inner level epsilon (the SC
phase then runs longer) or tightening the protected MC/SR control limits
(the mission controller then has less authority).

Author: Dr. Marcus Hale
Date: 2024-02-14
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
import structlog

from .config import ReachOptions
from .errors import InfeasibleAtZero, TuningExhausted
from .reachability import ControlPolytope, TimingResult, find_T_UC
from .safety_timing import safety_time_bound

logger = structlog.get_logger(__name__)


class TuningStrategy(str, Enum):
    SHRINK_EPSILON = "shrink_epsilon"
    TIGHTEN_LIMITS = "tighten_limits"

    @property
    def default_factor(self) -> float:
        return 0.5 if self is TuningStrategy.SHRINK_EPSILON else 0.8


@dataclass
class TimingProblem:
    """Inputs of the T_UC search that tuning is allowed to vary.

    Attributes:
        A: State matrix
        B: Input matrix
        U: Protected MC/SR control box
        P: Lyapunov matrix of E_C
        epsilon: Inner safe-set level
        T_SR: Software-refresh duration (s)
        gamma: Decay rate of the safety controller, for the T_SC column
        options: Reach search options
    """
    A: np.ndarray
    B: np.ndarray
    U: ControlPolytope
    P: np.ndarray
    epsilon: float
    T_SR: float
    gamma: float
    options: ReachOptions = field(default_factory=ReachOptions)

    def solve(self) -> TimingResult:
        try:
            return find_T_UC(self.A, self.B, self.U, self.P, self.epsilon, self.T_SR,
                             options=self.options)
        except InfeasibleAtZero as exc:
            return TimingResult(
                T_UC=0.0,
                T_SR=self.T_SR,
                feasible=False,
                grid_step=self.options.grid_step,
                diagnostics=[(0.0, exc.max_value)],
            )


@dataclass
class TuningStep:
    step: int
    epsilon: float
    lower: List[float]
    upper: List[float]
    T_UC: float
    T_SC_bound: float
    feasible: bool

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "epsilon": self.epsilon,
            "lower": self.lower,
            "upper": self.upper,
            "T_UC": self.T_UC,
            "T_SC_bound": self.T_SC_bound,
            "feasible": self.feasible,
        }


@dataclass
class TuningOutcome:
    """Feasible timing result together with the parameters that produced it."""
    timing: TimingResult
    epsilon: float
    U: ControlPolytope
    log: List[TuningStep]


def tune_feasibility(
    problem: TimingProblem,
    strategy: TuningStrategy,
    factor: Optional[float] = None,
    max_steps: int = 20,
    initial: Optional[TimingResult] = None
) -> TuningOutcome:
    """Iterate a tuning strategy until T_UC > T_SR.

    Args:
        problem: Baseline timing problem
        strategy: SHRINK_EPSILON multiplies epsilon by ``factor`` (0.5 by
            default); TIGHTEN_LIMITS multiplies both MC/SR bounds (0.8)
        factor: Schedule factor in (0, 1)
        max_steps: Iteration cap
        initial: Already computed result for ``problem``, if any

    Returns:
        TuningOutcome; an already-feasible problem comes back unchanged with
        an empty log

    Raises:
        TuningExhausted: If no step within the cap is feasible; carries the log
    """
    strategy = TuningStrategy(strategy)
    factor = strategy.default_factor if factor is None else factor
    if not 0.0 < factor < 1.0:
        raise ValueError(f"schedule factor must lie in (0, 1), got {factor}")

    timing = initial if initial is not None else problem.solve()
    if timing.feasible:
        return TuningOutcome(timing=timing, epsilon=problem.epsilon, U=problem.U, log=[])

    epsilon, U = problem.epsilon, problem.U
    log: List[TuningStep] = []
    for step in range(1, max_steps + 1):
        if strategy is TuningStrategy.SHRINK_EPSILON:
            epsilon *= factor
        else:
            U = U.scaled(factor)
        candidate = TimingProblem(
            A=problem.A, B=problem.B, U=U, P=problem.P, epsilon=epsilon,
            T_SR=problem.T_SR, gamma=problem.gamma, options=problem.options,
        )
        timing = candidate.solve()
        entry = TuningStep(
            step=step,
            epsilon=epsilon,
            lower=U.lower.tolist(),
            upper=U.upper.tolist(),
            T_UC=timing.T_UC,
            T_SC_bound=safety_time_bound(problem.gamma, epsilon),
            feasible=timing.feasible,
        )
        log.append(entry)
        logger.info("tuning_step", strategy=strategy.value, **entry.as_dict())
        if timing.feasible:
            return TuningOutcome(timing=timing, epsilon=epsilon, U=U, log=log)

    raise TuningExhausted(
        f"{strategy.value} did not reach T_UC > T_SR = {problem.T_SR} in {max_steps} steps",
        log,
    )
