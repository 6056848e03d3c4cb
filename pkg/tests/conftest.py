"""
Pytest configuration and shared fixtures.

Provides the shipped scenarios, their certificates and small reference
systems used across the suite.

Author: Dr. Elena Voss
Date: 2024-03-04
"""

from pathlib import Path

import numpy as np
import pytest

from src.certification.ellipsoid import PolyhedralConstraints
from src.testbed.pipeline import run_pipeline
from src.testbed.scenario import load_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir():
    """Return path to the shipped scenario documents."""
    return SCENARIO_DIR


@pytest.fixture
def rng():
    """Seeded generator for reproducible sampling."""
    return np.random.default_rng(20240304)


@pytest.fixture
def unit_box():
    """Unit box |x_i| <= 1 in the plane as four half-spaces."""
    return PolyhedralConstraints(np.vstack([np.eye(2), -np.eye(2)]))


@pytest.fixture(scope="session")
def integrator_scenario():
    return load_scenario(SCENARIO_DIR / "integrator_1d.json")


@pytest.fixture(scope="session")
def integrator_certificate(integrator_scenario):
    """Certificate of the scalar integrator (T_UC = 0.9)."""
    return run_pipeline(integrator_scenario)


@pytest.fixture(scope="session")
def infeasible_scenario():
    return load_scenario(SCENARIO_DIR / "integrator_infeasible.json")


@pytest.fixture(scope="session")
def quadrotor_scenario():
    return load_scenario(SCENARIO_DIR / "quadrotor_default.json")


@pytest.fixture(scope="session")
def quadrotor_certificate(quadrotor_scenario):
    """Certificate of the default quadrotor scenario; computed once per session."""
    return run_pipeline(quadrotor_scenario)


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
