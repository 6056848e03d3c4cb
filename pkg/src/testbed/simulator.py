"""
Closed-loop rejuvenation simulation and Monte Carlo validation.

Each fixed step evaluates V = x^T P x, lets the attack through the
communication gate, picks the control source for the current mode, clamps
it to the mode's limits, records a trace row, integrates the plant and
advances the mode machine with the post-step state. The state left by the
last step is checked against E_C once the loop ends.

Author: Dr. Sofia Lindqvist
Date: 2024-02-28
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from ..certification.errors import ConfigError
from ..certification.linalg import zoh_discretize
from .attacks import AttackKind, AttackSchedule, AttackWindow, RandomBox, attack_input
from .fsm import ControlSource, Mode, ModeEvent, RejuvenationMachine, apply_limits
from .pipeline import CertificateReport
from .quadrotor import QuadrotorPlant
from .scenario import AttackSpec, ResolvedScenario, Scenario, resolve

logger = structlog.get_logger(__name__)

VIOLATION = "safety_violation"


class LinearZOHPlant:
    """Exact zero-order-hold propagation of x' = A x + B u."""

    def __init__(self, A: np.ndarray, B: np.ndarray):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.asarray(B, dtype=float).reshape(self.A.shape[0], -1)
        self._cache: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x: np.ndarray, u: np.ndarray, dt: float, t: float = 0.0) -> np.ndarray:
        if dt not in self._cache:
            self._cache[dt] = zoh_discretize(self.A, self.B, dt)
        Ad, Bd = self._cache[dt]
        return Ad @ x + Bd @ u


@dataclass
class SimulationTrace:
    """Time-stamped record of one rejuvenation run.

    Attributes:
        n: State dimension
        m: Input dimension
        dt: Step (s)
        times, modes, states, inputs, attacks, values, events: One entry per row
        history: Mode transitions of the run
        violated: V exceeded 1, at a recorded row or at the terminal state
        terminal_value: V of the state left by the last integration step
    """
    n: int
    m: int
    dt: float
    times: List[float] = field(default_factory=list)
    modes: List[Mode] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    inputs: List[np.ndarray] = field(default_factory=list)
    attacks: List[bool] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    events: List[str] = field(default_factory=list)
    history: List[ModeEvent] = field(default_factory=list)
    violated: bool = False
    final_sc_elapsed: float = 0.0
    terminal_value: Optional[float] = None

    def __len__(self) -> int:
        return len(self.times)

    def append(self, t: float, mode: Mode, x: np.ndarray, u: np.ndarray,
               attack: bool, V: float, event: str) -> None:
        self.times.append(t)
        self.modes.append(mode)
        self.states.append(np.array(x, dtype=float))
        self.inputs.append(np.array(u, dtype=float))
        self.attacks.append(bool(attack))
        self.values.append(float(V))
        self.events.append(event)

    @property
    def columns(self) -> List[str]:
        return (
            ["t", "mode"]
            + [f"x{i}" for i in range(self.n)]
            + [f"u{j}" for j in range(self.m)]
            + ["attack", "V", "event"]
        )

    def to_frame(self) -> pd.DataFrame:
        if not self.times:
            return pd.DataFrame(columns=self.columns)
        frame = pd.DataFrame(np.vstack(self.states), columns=[f"x{i}" for i in range(self.n)])
        frame = frame.join(pd.DataFrame(np.vstack(self.inputs),
                                        columns=[f"u{j}" for j in range(self.m)]))
        frame.insert(0, "mode", [mode.value for mode in self.modes])
        frame.insert(0, "t", self.times)
        frame["attack"] = np.asarray(self.attacks, dtype=int)
        frame["V"] = self.values
        frame["event"] = self.events
        return frame[self.columns]

    @property
    def max_value(self) -> float:
        values = self.values if self.terminal_value is None else self.values + [self.terminal_value]
        return max(values) if values else 0.0

    def sc_durations(self) -> List[float]:
        """Lengths of the SC phases that ran, including one still open at the end.

        An SC phase entered with the state already in E_eps closes in the same
        step and is not counted.
        """
        durations = [
            e.duration for e in self.history if e.source is Mode.SC and e.duration > 0.0
        ]
        if self.history and self.history[-1].target is Mode.SC:
            durations.append(self.final_sc_elapsed)
        return durations

    def mode_sequence(self) -> List[Mode]:
        return [event.target for event in self.history]

    def entered(self, mode: Mode) -> bool:
        return any(event.target is mode for event in self.history)


def _format_events(events: List[ModeEvent]) -> str:
    parts = []
    for event in events:
        source = event.source.value if event.source is not None else "start"
        parts.append(f"{source}->{event.target.value}")
    return ";".join(parts)


def _plant_for(resolved: ResolvedScenario) -> Union[QuadrotorPlant, LinearZOHPlant]:
    if resolved.quad_params is not None:
        return QuadrotorPlant(resolved.quad_params)
    return LinearZOHPlant(resolved.plant.A, resolved.plant.B)


def attack_schedule_for(
    resolved: ResolvedScenario,
    attack: Optional[str] = None,
    seed: Optional[int] = None
) -> AttackSchedule:
    """Scenario attacks, optionally narrowed to one kind or switched off.

    ``attack='none'`` disables all attacks; a kind keeps only the scenario's
    windows of that kind, or runs it for the whole simulation when the
    scenario has none.
    """
    if attack is None:
        return resolved.attack_schedule(seed)
    if attack == "none":
        return AttackSchedule([])
    try:
        kind = AttackKind(attack)
    except ValueError as exc:
        raise ConfigError(f"unknown attack '{attack}'", "simulator") from exc
    specs = resolved.scenario.attacks
    matching = [spec for spec in specs if spec.kind is kind]
    if not matching:
        target = next((spec.target for spec in specs if spec.target is not None), None)
        matching = [AttackSpec(kind=kind, target=target)]
    narrowed = resolved.scenario.model_copy(update={"attacks": matching})
    return replace(resolved, scenario=narrowed).attack_schedule(seed)


def simulate(
    scenario: Union[Scenario, ResolvedScenario],
    certificate: CertificateReport,
    attack: Optional[str] = None,
    schedule: Optional[AttackSchedule] = None,
    x0: Optional[np.ndarray] = None,
    duration: Optional[float] = None
) -> SimulationTrace:
    """Run the rejuvenation loop on the scenario's simulation plant.

    Args:
        scenario: Scenario document or resolved scenario
        certificate: Feasible timing certificate
        attack: Attack override ('none' or an attack kind)
        schedule: Explicit attack schedule, takes precedence over ``attack``
        x0: Initial deviation state, defaults to the scenario's
        duration: Horizon (s), defaults to the scenario's

    Returns:
        SimulationTrace; a run with V > 1 ends with a violation row, or is
        marked violated when only the terminal state leaves E_C

    Raises:
        ConfigError: If the certificate is infeasible or dt does not divide
            the mode durations
        NonFiniteState: If the plant state diverges
    """
    resolved = scenario if isinstance(scenario, ResolvedScenario) else resolve(scenario)
    sim = resolved.scenario.simulation
    section = resolved.scenario.rejuvenation
    dt = sim.dt
    horizon = sim.duration if duration is None else duration
    if not certificate.feasible:
        raise ConfigError("simulation needs a feasible certificate", "simulator")

    cfg = certificate.rejuvenation_config(section.sr_input)
    P = certificate.P
    x = np.array(resolved.x0 if x0 is None else x0, dtype=float)
    machine = RejuvenationMachine(cfg, P, dt, x)
    plant = _plant_for(resolved)
    mission = resolved.mission_law()
    if schedule is None:
        schedule = attack_schedule_for(resolved, attack)

    trace = SimulationTrace(n=resolved.plant.n, m=resolved.plant.m, dt=dt)
    held = np.zeros(resolved.plant.m)
    pending = _format_events(machine.history)
    steps = int(math.floor(horizon / dt + 1e-9))

    for k in range(steps):
        t = round(k * dt, 12)
        V = float(x @ P @ x)
        window = schedule.active(t)
        effective = machine.gate(window is not None)
        source = machine.source(effective)

        if source is ControlSource.MISSION:
            u = mission.command(x, dt)
        elif source is ControlSource.ATTACKER:
            u = attack_input(window.policy, x, dt)
        elif source is ControlSource.HOLD:
            u = held
        elif source is ControlSource.ZERO:
            u = np.zeros(resolved.plant.m)
        else:
            u = certificate.safety.control(x)
        u = apply_limits(u, machine.limits)
        if machine.mode is Mode.MC:
            held = u

        if V > 1.0:
            trace.append(t, machine.mode, x, u, effective, V,
                         ";".join(filter(None, [pending, VIOLATION])))
            trace.violated = True
            logger.warning("safety_violation", t=t, V=V, mode=machine.mode.value)
            break
        trace.append(t, machine.mode, x, u, effective, V, pending)

        x = plant.step(x, u, dt, t)
        events = machine.step(x, round((k + 1) * dt, 12), effective)
        if any(event.target is Mode.MC for event in events):
            mission.reset()
        pending = _format_events(events)

    if steps > 0 and not trace.violated:
        trace.terminal_value = float(x @ P @ x)
        if trace.terminal_value > 1.0:
            trace.violated = True
            logger.warning("safety_violation", t=round(steps * dt, 12), V=trace.terminal_value,
                           mode=machine.mode.value, terminal=True)

    trace.history = machine.history
    trace.final_sc_elapsed = machine.state.sc_elapsed
    logger.info(
        "simulation_complete",
        scenario=resolved.scenario.name,
        rows=len(trace),
        max_V=trace.max_value,
        violated=trace.violated,
        sc_phases=len(trace.sc_durations()),
    )
    return trace


def reach_containment(
    trace: SimulationTrace,
    certificate: CertificateReport,
    tol: float = 0.0
) -> Tuple[int, int]:
    """Count trace states inside R+(k * grid) after each MC entry.

    Every MC entry starts in E_eps, so the state k grid steps later must lie
    in the reach over-approximation while k * grid <= T_UC.

    Returns:
        (checks, hits)
    """
    timing = certificate.timing
    ratio = timing.grid_step / trace.dt
    if timing.offsets is None or abs(ratio - round(ratio)) > 1e-9 or not trace.times:
        return 0, 0
    stride = int(round(ratio))
    max_k = min(len(timing.offsets) - 1, int(round(timing.T_UC / timing.grid_step)))
    sc_entries = sorted(e.t for e in trace.history if e.target is Mode.SC)
    checks = hits = 0
    for event in trace.history:
        if event.target is not Mode.MC:
            continue
        start = int(round(event.t / trace.dt))
        stop = next((t for t in sc_entries if t > event.t), math.inf)
        for k in range(max_k + 1):
            row = start + k * stride
            if row >= len(trace.times) or trace.times[row] > stop + 1e-9:
                break
            checks += 1
            hits += timing.reach_contains(k, trace.states[row], tol)
    return checks, hits


@dataclass
class RunSummary:
    max_value: float
    max_sc_duration: float
    sc_activations: int
    violated: bool
    checks: int
    hits: int


@dataclass
class ValidationReport:
    """Aggregate of a Monte Carlo validation campaign."""
    runs: int
    seed: int
    T_SC_bound: float
    max_value: Optional[float] = None
    max_sc_duration: Optional[float] = None
    violations: int = 0
    sc_activations: int = 0
    containment_checks: int = 0
    containment_hits: int = 0

    @property
    def containment_rate(self) -> Optional[float]:
        if self.containment_checks == 0:
            return None
        return self.containment_hits / self.containment_checks

    @property
    def passed(self) -> bool:
        within = self.max_sc_duration is None or self.max_sc_duration <= self.T_SC_bound
        return self.violations == 0 and within

    def to_dict(self) -> Dict:
        return {
            "runs": self.runs,
            "seed": self.seed,
            "max_V": self.max_value,
            "max_sc_duration": self.max_sc_duration,
            "T_SC_bound": self.T_SC_bound,
            "violations": self.violations,
            "sc_activations": self.sc_activations,
            "containment_checks": self.containment_checks,
            "containment_hits": self.containment_hits,
            "containment_rate": self.containment_rate,
            "passed": self.passed,
        }


def sample_inner_set(P: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of E_eps = {x : x^T P x <= epsilon}."""
    n = P.shape[0]
    direction = rng.standard_normal(n)
    direction /= np.linalg.norm(direction)
    radius = math.sqrt(epsilon) * rng.uniform() ** (1.0 / n)
    L = np.linalg.cholesky(P)
    return np.linalg.solve(L.T, radius * direction)


def _validation_run(payload: tuple) -> RunSummary:
    scenario, certificate, seed, index, duration = payload
    resolved = resolve(scenario)
    rng = np.random.default_rng([seed, index])
    x0 = sample_inner_set(certificate.P, certificate.epsilon, rng)
    policy = RandomBox(certificate.mc_limits, seed=[seed, index, 1])
    schedule = AttackSchedule([AttackWindow(policy)])
    trace = simulate(resolved, certificate, schedule=schedule, x0=x0, duration=duration)
    checks, hits = reach_containment(trace, certificate)
    durations = trace.sc_durations()
    return RunSummary(
        max_value=trace.max_value,
        max_sc_duration=max(durations) if durations else 0.0,
        sc_activations=len(durations),
        violated=trace.violated,
        checks=checks,
        hits=hits,
    )


def monte_carlo_validate(
    scenario: Scenario,
    certificate: CertificateReport,
    runs: int,
    seed: int = 0,
    workers: int = 1,
    duration: Optional[float] = None
) -> ValidationReport:
    """Simulate ``runs`` random_box campaigns against a certificate.

    Each run starts from a uniform sample of E_eps and faces a random corner
    of the protected box whenever the gate lets it through. Run i draws from
    ``default_rng([seed, i])``, so reports are reproducible for any
    ``workers``.

    Args:
        scenario: Scenario document
        certificate: Feasible certificate
        runs: Number of simulations
        seed: Campaign seed
        workers: Process-pool size; 1 runs sequentially
        duration: Horizon per run (s), defaults to the scenario's

    Returns:
        ValidationReport; violations are counted, not raised
    """
    if runs < 0:
        raise ConfigError(f"runs must be non-negative, got {runs}", "simulator")
    report = ValidationReport(runs=runs, seed=seed, T_SC_bound=certificate.T_SC_bound)
    if runs == 0:
        return report

    payloads = [(scenario, certificate, seed, i, duration) for i in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_validation_run, payloads))
    else:
        summaries = [_validation_run(payload) for payload in payloads]

    report.max_value = max(s.max_value for s in summaries)
    report.max_sc_duration = max(s.max_sc_duration for s in summaries)
    report.violations = sum(s.violated for s in summaries)
    report.sc_activations = sum(s.sc_activations for s in summaries)
    report.containment_checks = sum(s.checks for s in summaries)
    report.containment_hits = sum(s.hits for s in summaries)
    logger.info("validation_complete", **report.to_dict())
    return report
