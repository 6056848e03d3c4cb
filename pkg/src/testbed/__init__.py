"""
Testbed layer of the Safe Rejuvenation Toolkit.

Quadrotor plant, attack library, rejuvenation mode machine, scenario
loading, the certification pipeline, simulation and artifact export.

Author: Dr. Sofia Lindqvist
Date: 2024-02-19
"""

__version__ = "1.0.1"

from .fsm import Mode, RejuvenationConfig, RejuvenationMachine
from .pipeline import CertificateReport, run_pipeline
from .scenario import Scenario, load_scenario
from .simulator import SimulationTrace, ValidationReport, monte_carlo_validate, simulate

__all__ = [
    "CertificateReport",
    "Mode",
    "RejuvenationConfig",
    "RejuvenationMachine",
    "Scenario",
    "SimulationTrace",
    "ValidationReport",
    "load_scenario",
    "monte_carlo_validate",
    "run_pipeline",
    "simulate",
]
