"""
Scenario documents: schema, loading and resolution into runtime objects.

A scenario is a single JSON (or YAML) document with a versioned ``schema``
field. Sections describe the plant, the polyhedral operating region, the
controller gains, rejuvenation timing, timed attacks and the simulation.

Author: Dr. Sofia Lindqvist
Date: 2024-02-26
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
import structlog
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..certification.config import ReachOptions, SolverOptions
from ..certification.ellipsoid import LinearPlant, PolyhedralConstraints
from ..certification.errors import ConfigError
from ..certification.gains import lqr_gain, lqr_integral_gain, newton_kleinman
from ..certification.reachability import ControlPolytope
from .attacks import AttackKind, AttackSchedule, AttackWindow, build_attack
from .controllers import IntegralStateFeedback, StateFeedback
from .quadrotor import (
    QuadrotorParams,
    hover_constraint_box,
    linearize_hover,
    position_selector,
)

logger = structlog.get_logger(__name__)

SCHEMA_VERSION = "rejuvenation-scenario/1"

Matrix = List[List[float]]


class BoxLimits(BaseModel):
    lower: List[float]
    upper: List[float]

    def to_polytope(self) -> ControlPolytope:
        return ControlPolytope(self.lower, self.upper)


class PlantSection(BaseModel):
    """Builtin quadrotor or explicit (A, B) matrices."""

    kind: Literal["quadrotor", "linear"] = "quadrotor"
    params: QuadrotorParams = Field(default_factory=QuadrotorParams)
    A: Optional[Matrix] = None
    B: Optional[Matrix] = None
    x_e: Optional[List[float]] = None

    @model_validator(mode="after")
    def _matrices_for_linear(self) -> "PlantSection":
        if self.kind == "linear" and (self.A is None or self.B is None):
            raise ValueError("linear plants need both A and B")
        return self


class QuadrotorBox(BaseModel):
    position: List[float] = Field(default=[2.0, 2.0, 5.0], min_length=3, max_length=3)
    angle: float = Field(default=math.pi / 4, gt=0.0)
    velocity: List[float] = Field(default=[2.0, 2.0, 5.0], min_length=3, max_length=3)
    rate: float = Field(default=5.0, gt=0.0)


class ConstraintSection(BaseModel):
    """Operating region as half-spaces a_j^T x <= b_j or the quadrotor box.

    ``include_control_limits`` appends the rows keeping the safety law
    inside the SC limits, so E_C is saturation-free.
    """

    kind: Literal["halfspaces", "quadrotor_box"] = "quadrotor_box"
    a: Optional[Matrix] = None
    b: Optional[List[float]] = None
    box: QuadrotorBox = Field(default_factory=QuadrotorBox)
    include_control_limits: bool = False

    @model_validator(mode="after")
    def _rows_for_halfspaces(self) -> "ConstraintSection":
        if self.kind == "halfspaces" and (self.a is None or self.b is None):
            raise ValueError("half-space constraints need both a and b")
        return self


class LqrWeights(BaseModel):
    Q: List[float]
    R: List[float]


class GainSection(BaseModel):
    """Explicit gains or LQR weights to synthesize them from.

    The mission law is plain state feedback (``K_mission``) or integral
    LQR (``K_mission_aug`` / ``mission_weights`` with ``integral`` on).
    A gain given together with weights seeds Newton-Kleinman refinement
    towards the LQR gain of those weights.
    """

    K_safety: Optional[Matrix] = None
    safety_weights: Optional[LqrWeights] = None
    K_mission: Optional[Matrix] = None
    K_mission_aug: Optional[Matrix] = None
    mission_weights: Optional[LqrWeights] = None
    integral: bool = True
    integral_outputs: Optional[Matrix] = None

    @model_validator(mode="after")
    def _safety_gain_source(self) -> "GainSection":
        if self.K_safety is None and self.safety_weights is None:
            raise ValueError("gains need K_safety or safety_weights")
        return self


class TuningSection(BaseModel):
    enabled: bool = False
    strategy: Literal["shrink_epsilon", "tighten_limits"] = "shrink_epsilon"
    factor: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    max_steps: int = Field(default=20, ge=1)


class RejuvenationSection(BaseModel):
    T_SR: float = Field(gt=0.0)
    epsilon: float = Field(gt=0.0, lt=1.0)
    mc_limits: BoxLimits
    sc_limits: BoxLimits
    grid_step: float = Field(default=0.01, gt=0.0)
    t_max: float = Field(default=10.0, gt=0.0)
    frame: Literal["axis", "lyapunov"] = "axis"
    margin_steps: int = Field(default=0, ge=0)
    sr_input: Literal["hold", "zero"] = "hold"
    seed: int = 0
    solver: SolverOptions = Field(default_factory=SolverOptions)
    tuning: TuningSection = Field(default_factory=TuningSection)

    def reach_options(self) -> ReachOptions:
        return ReachOptions(
            grid_step=self.grid_step,
            t_max=self.t_max,
            frame=self.frame,
            margin_steps=self.margin_steps,
        )


class AttackSpec(BaseModel):
    kind: AttackKind
    start_time: float = Field(default=0.0, ge=0.0)
    duration: float = Field(default=math.inf, gt=0.0)
    target: Optional[List[float]] = None
    seed: Optional[int] = None


class SimulationSection(BaseModel):
    dt: float = Field(default=0.01, gt=0.0)
    duration: float = Field(default=5.0, ge=0.0)
    initial_state: Optional[List[float]] = None


class Scenario(BaseModel):
    """Root scenario document."""

    model_config = ConfigDict(populate_by_name=True)

    schema_version: Literal["rejuvenation-scenario/1"] = Field(alias="schema")
    name: str = "scenario"
    description: str = ""
    plant: PlantSection
    constraints: ConstraintSection
    gains: GainSection
    rejuvenation: RejuvenationSection
    attacks: List[AttackSpec] = Field(default_factory=list)
    simulation: SimulationSection = Field(default_factory=SimulationSection)

    @model_validator(mode="after")
    def _dt_divides_refresh(self) -> "Scenario":
        dt = self.simulation.dt
        ratio = self.rejuvenation.T_SR / dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("simulation dt must divide T_SR")
        if dt > self.rejuvenation.T_SR:
            raise ValueError("simulation dt must not exceed T_SR")
        return self


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read and validate a scenario file (.json, .yaml or .yml).

    Raises:
        ConfigError: On unreadable files, parse errors or schema violations
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}", "scenario") from exc
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            document = yaml.safe_load(text)
        else:
            document = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse scenario {path}: {exc}", "scenario") from exc
    return parse_scenario(document)


def parse_scenario(document: dict) -> Scenario:
    try:
        scenario = Scenario.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(f"invalid scenario: {exc}", "scenario") from exc
    logger.info("scenario_loaded", name=scenario.name, plant=scenario.plant.kind)
    return scenario


def _matrix(rows: Optional[Matrix], shape: tuple, what: str) -> np.ndarray:
    array = np.asarray(rows, dtype=float)
    if array.shape != shape:
        raise ConfigError(f"{what} must be {shape[0]}x{shape[1]}, got {array.shape}", "scenario")
    return array


def control_limit_rows(K: np.ndarray, limits: ControlPolytope) -> np.ndarray:
    """Normalized rows keeping u = -K x inside the limits.

    Channels whose box does not contain zero strictly on a side are skipped.
    """
    rows = []
    for k_i, low, high in zip(np.atleast_2d(K), limits.lower, limits.upper):
        if high > 0.0:
            rows.append(-k_i / high)
        if low < 0.0:
            rows.append(k_i / -low)
    return np.array(rows)


@dataclass
class ResolvedScenario:
    """Scenario turned into matrices, gains and limit boxes."""
    scenario: Scenario
    plant: LinearPlant
    constraints: PolyhedralConstraints
    K_safety: np.ndarray
    mc_limits: ControlPolytope
    sc_limits: ControlPolytope
    off_input: np.ndarray
    quad_params: Optional[QuadrotorParams]
    x0: np.ndarray
    integral_C: Optional[np.ndarray]
    K_mission: np.ndarray

    def mission_law(self) -> Union[StateFeedback, IntegralStateFeedback]:
        """Fresh mission controller instance."""
        if self.integral_C is not None:
            return IntegralStateFeedback(self.K_mission, self.integral_C)
        return StateFeedback(self.K_mission)

    def attack_schedule(self, seed: Optional[int] = None) -> AttackSchedule:
        """Fresh policies for the scenario's attack windows.

        Windows without their own seed draw from ``[seed, index]``.

        Raises:
            ConfigError: If an attack lacks the context its kind needs
        """
        base = self.scenario.rejuvenation.seed if seed is None else seed
        windows = []
        for index, spec in enumerate(self.scenario.attacks):
            target = None
            if spec.target is not None:
                target = np.asarray(spec.target, dtype=float)
                if target.shape != (self.plant.n,):
                    raise ConfigError(
                        f"attack target must have {self.plant.n} entries", "scenario"
                    )
            try:
                policy = build_attack(
                    spec.kind,
                    off_input=self.off_input,
                    law=self.mission_law(),
                    target=target,
                    limits=self.mc_limits,
                    seed=spec.seed if spec.seed is not None else [base, index],
                )
            except ValueError as exc:
                raise ConfigError(str(exc), "scenario") from exc
            windows.append(AttackWindow(policy, spec.start_time, spec.duration))
        return AttackSchedule(windows)


def resolve(scenario: Scenario) -> ResolvedScenario:
    """Build the linear plant, constraints, gains and limits of a scenario.

    Raises:
        ConfigError: If dimensions do not agree across sections
    """
    section = scenario.plant
    quad_params: Optional[QuadrotorParams] = None
    if section.kind == "quadrotor":
        quad_params = section.params
        plant = linearize_hover(quad_params)
        off_input = np.array([-quad_params.hover_thrust, 0.0, 0.0, 0.0])
    else:
        A = np.asarray(section.A, dtype=float)
        B = np.asarray(section.B, dtype=float)
        plant = LinearPlant(A=A, B=B, x_e=section.x_e)
        off_input = np.zeros(plant.m)
    n, m = plant.n, plant.m

    rejuvenation = scenario.rejuvenation
    mc_limits = rejuvenation.mc_limits.to_polytope()
    sc_limits = rejuvenation.sc_limits.to_polytope()
    if mc_limits.m != m or sc_limits.m != m:
        raise ConfigError(f"control limits must have {m} channels", "scenario")

    gains = scenario.gains
    if gains.K_safety is not None:
        K_safety = _matrix(gains.K_safety, (m, n), "K_safety")
        if gains.safety_weights is not None:
            K_safety = newton_kleinman(
                plant.A, plant.B, gains.safety_weights.Q, gains.safety_weights.R, K_safety
            )
    else:
        K_safety = lqr_gain(plant.A, plant.B, gains.safety_weights.Q, gains.safety_weights.R)

    integral_C: Optional[np.ndarray] = None
    if gains.integral and (gains.K_mission_aug is not None or gains.mission_weights is not None):
        if gains.integral_outputs is not None:
            integral_C = np.atleast_2d(np.asarray(gains.integral_outputs, dtype=float))
        elif section.kind == "quadrotor":
            integral_C = position_selector()
        else:
            integral_C = np.eye(n)
        p = integral_C.shape[0]
        seed = None
        if gains.K_mission_aug is not None:
            seed = _matrix(gains.K_mission_aug, (m, n + p), "K_mission_aug")
        if gains.mission_weights is None:
            K_mission = seed
        else:
            K_mission = lqr_integral_gain(
                plant.A, plant.B, integral_C,
                gains.mission_weights.Q, gains.mission_weights.R, K0=seed,
            )
    elif gains.K_mission is not None:
        K_mission = _matrix(gains.K_mission, (m, n), "K_mission")
    elif gains.mission_weights is not None:
        K_mission = lqr_gain(plant.A, plant.B, gains.mission_weights.Q, gains.mission_weights.R)
    else:
        K_mission = K_safety.copy()

    cons = scenario.constraints
    if cons.kind == "quadrotor_box":
        if section.kind != "quadrotor":
            raise ConfigError("quadrotor_box constraints need the quadrotor plant", "scenario")
        box = cons.box
        constraints = hover_constraint_box(
            tuple(box.position), box.angle, tuple(box.velocity), box.rate
        )
    else:
        a = np.atleast_2d(np.asarray(cons.a, dtype=float))
        if a.shape[1] != n:
            raise ConfigError(f"half-space rows must have {n} entries", "scenario")
        constraints = PolyhedralConstraints.from_halfspaces(a, cons.b)
    if cons.include_control_limits:
        constraints = constraints.extended(control_limit_rows(K_safety, sc_limits))

    x0 = np.zeros(n)
    if scenario.simulation.initial_state is not None:
        x0 = np.asarray(scenario.simulation.initial_state, dtype=float)
        if x0.shape != (n,):
            raise ConfigError(f"initial state must have {n} entries", "scenario")

    return ResolvedScenario(
        scenario=scenario,
        plant=plant,
        constraints=constraints,
        K_safety=K_safety,
        mc_limits=mc_limits,
        sc_limits=sc_limits,
        off_input=off_input,
        quad_params=quad_params,
        x0=x0,
        integral_C=integral_C,
        K_mission=K_mission,
    )
