"""
Certification pipeline.

Runs the offline design flow for a scenario: safety gain and closed loop,
maximal invariant ellipsoid E_C, decay rate and T_SC bound, the T_UC search
(with feasibility tuning when enabled) and the refresh period t_r.

Author: Dr. Sofia Lindqvist
Date: 2024-02-27
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np
import structlog

from ..certification.ellipsoid import (
    InvariantEllipsoid,
    VerificationReport,
    closed_loop_matrix,
    synthesize_max_ellipsoid,
    verify_ellipsoid,
)
from ..certification.reachability import ControlPolytope, TimingResult
from ..certification.safety_timing import SafetyController, build_safety_controller
from ..certification.tuning import (
    TimingProblem,
    TuningStep,
    TuningStrategy,
    tune_feasibility,
)
from .fsm import RejuvenationConfig
from .scenario import ResolvedScenario, Scenario, resolve

logger = structlog.get_logger(__name__)


@dataclass
class CertificateReport:
    """Timing certificate of a scenario.

    Attributes:
        scenario: Scenario name
        ellipsoid: Maximal invariant ellipsoid E_C
        safety: Safety controller with gamma and the T_SC bound
        timing: Result of the T_UC search (after tuning, if any)
        epsilon: Inner level actually certified
        mc_limits: Protected MC/SR limits actually certified
        sc_limits: SC control limits
        T_SR: Software-refresh duration (s)
        verification: Invariant checks of E_C
        tuning_log: Steps taken by feasibility tuning
        tuning_strategy: Strategy used, when tuning ran
    """
    scenario: str
    ellipsoid: InvariantEllipsoid
    safety: SafetyController
    timing: TimingResult
    epsilon: float
    mc_limits: ControlPolytope
    sc_limits: ControlPolytope
    T_SR: float
    verification: VerificationReport
    tuning_log: List[TuningStep] = field(default_factory=list)
    tuning_strategy: Optional[str] = None

    @property
    def P(self) -> np.ndarray:
        return self.ellipsoid.P

    @property
    def Q(self) -> np.ndarray:
        return self.ellipsoid.Q

    @property
    def gamma(self) -> float:
        return self.safety.gamma

    @property
    def T_SC_bound(self) -> float:
        return self.safety.T_SC_bound

    @property
    def T_UC(self) -> float:
        return self.timing.T_UC

    @property
    def t_r(self) -> float:
        return self.timing.t_r

    @property
    def feasible(self) -> bool:
        return self.timing.feasible

    def rejuvenation_config(self, sr_input: str = "hold") -> RejuvenationConfig:
        """Mode-machine configuration of a feasible certificate.

        Raises:
            ConfigError: If the certificate is infeasible (t_r <= 0)
        """
        return RejuvenationConfig(
            T_SR=self.T_SR,
            t_r=self.t_r,
            epsilon=self.epsilon,
            mc_limits=self.mc_limits,
            sc_limits=self.sc_limits,
            sr_input=sr_input,
        )

    def to_dict(self) -> Dict:
        return {
            "scenario": self.scenario,
            "feasible": self.feasible,
            "T_SR": self.T_SR,
            "T_UC": self.T_UC,
            "t_r": self.t_r,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "T_SC_bound": self.T_SC_bound,
            "log_det_Q": self.ellipsoid.log_volume,
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
            "K_safety": self.safety.K.tolist(),
            "mc_limits": {"lower": self.mc_limits.lower.tolist(),
                          "upper": self.mc_limits.upper.tolist()},
            "sc_limits": {"lower": self.sc_limits.lower.tolist(),
                          "upper": self.sc_limits.upper.tolist()},
            "verification": self.verification.as_dict(),
            "reach": {
                "grid_step": self.timing.grid_step,
                "capped": self.timing.capped,
                "max_value": [[t, v] for t, v in self.timing.diagnostics],
            },
            "tuning": {
                "strategy": self.tuning_strategy,
                "log": [step.as_dict() for step in self.tuning_log],
            },
        }


def run_pipeline(
    scenario: Union[Scenario, ResolvedScenario],
    strategy: Optional[Union[str, TuningStrategy]] = None
) -> CertificateReport:
    """Certify a scenario end to end.

    Args:
        scenario: Scenario document or an already resolved one
        strategy: Forces feasibility tuning with this strategy, overriding the
            scenario's tuning section

    Returns:
        CertificateReport; infeasible certificates are returned, not raised

    Raises:
        ConfigError: On inconsistent scenarios
        NotHurwitz: If the safety gain does not stabilize the linearization
        SolverFailure: If the ellipsoid synthesis does not converge
        TuningExhausted: If tuning ran out of steps
    """
    resolved = scenario if isinstance(scenario, ResolvedScenario) else resolve(scenario)
    section = resolved.scenario.rejuvenation
    plant = resolved.plant

    A_sc = closed_loop_matrix(plant, resolved.K_safety).matrix
    ellipsoid = synthesize_max_ellipsoid(A_sc, resolved.constraints, section.solver)
    verification = verify_ellipsoid(
        ellipsoid.Q, A_sc, resolved.constraints,
        K=resolved.K_safety,
        u_lower=resolved.sc_limits.lower,
        u_upper=resolved.sc_limits.upper,
    )
    if not verification.passed:
        logger.warning("ellipsoid_verification_failed", **verification.as_dict())
    safety = build_safety_controller(plant, resolved.K_safety, ellipsoid, section.epsilon, A_sc)

    problem = TimingProblem(
        A=plant.A,
        B=plant.B,
        U=resolved.mc_limits,
        P=ellipsoid.P,
        epsilon=section.epsilon,
        T_SR=section.T_SR,
        gamma=safety.gamma,
        options=section.reach_options(),
    )
    timing = problem.solve()
    epsilon, mc_limits = section.epsilon, resolved.mc_limits
    tuning_log: List[TuningStep] = []
    used: Optional[str] = None

    if strategy is None and section.tuning.enabled:
        strategy = section.tuning.strategy
    if strategy is not None and not timing.feasible:
        chosen = TuningStrategy(strategy)
        outcome = tune_feasibility(
            problem, chosen,
            factor=section.tuning.factor,
            max_steps=section.tuning.max_steps,
            initial=timing,
        )
        timing, epsilon, mc_limits, tuning_log = (
            outcome.timing, outcome.epsilon, outcome.U, outcome.log
        )
        used = chosen.value
        if epsilon != section.epsilon:
            safety = build_safety_controller(plant, resolved.K_safety, ellipsoid, epsilon, A_sc)

    report = CertificateReport(
        scenario=resolved.scenario.name,
        ellipsoid=ellipsoid,
        safety=safety,
        timing=timing,
        epsilon=epsilon,
        mc_limits=mc_limits,
        sc_limits=resolved.sc_limits,
        T_SR=section.T_SR,
        verification=verification,
        tuning_log=tuning_log,
        tuning_strategy=used,
    )
    logger.info(
        "certificate_issued",
        scenario=report.scenario,
        feasible=report.feasible,
        T_UC=report.T_UC,
        t_r=report.t_r,
        gamma=report.gamma,
        T_SC_bound=report.T_SC_bound,
    )
    return report
