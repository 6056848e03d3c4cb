"""
End-to-end tests of the certification pipeline.

Author: Dr. Elena Voss
Date: 2024-03-09
"""

import json
import math

import numpy as np
import pytest

from src.certification.errors import ConfigError, TuningExhausted
from src.certification.linalg import zoh_discretize
from src.certification.tuning import TuningStrategy
from src.testbed.pipeline import run_pipeline
from src.testbed.scenario import parse_scenario, resolve


@pytest.fixture
def infeasible_document(scenario_dir):
    return json.loads((scenario_dir / "integrator_infeasible.json").read_text())


def without_tuning(document, **tuning):
    document = json.loads(json.dumps(document))
    document["rejuvenation"]["tuning"] = {"enabled": False, **tuning}
    return parse_scenario(document)


class TestIntegratorCertificate:
    """Test suite for the scalar integrator reference values."""

    def test_timing(self, integrator_certificate):
        assert integrator_certificate.T_UC == 0.9
        assert integrator_certificate.t_r == 0.8
        assert integrator_certificate.feasible

    def test_safe_set_and_decay(self, integrator_certificate):
        assert integrator_certificate.P == pytest.approx(np.array([[1.0]]))
        assert integrator_certificate.gamma == pytest.approx(2.0)
        assert integrator_certificate.T_SC_bound == pytest.approx(math.log(100.0) / 2.0)
        assert integrator_certificate.verification.passed

    def test_report_dict(self, integrator_certificate):
        report = integrator_certificate.to_dict()
        assert report["scenario"] == "integrator_1d"
        assert report["T_UC"] == 0.9
        assert report["tuning"] == {"strategy": None, "log": []}
        assert report["reach"]["max_value"][0] == [0.0, pytest.approx(0.01)]
        json.dumps(report)

    def test_rejuvenation_config(self, integrator_certificate):
        cfg = integrator_certificate.rejuvenation_config("zero")
        assert cfg.t_r == 0.8
        assert cfg.sr_input == "zero"


class TestTuningInPipeline:
    """Test suite for infeasible scenarios and their remedies."""

    def test_scenario_tuning_section(self, infeasible_scenario):
        report = run_pipeline(infeasible_scenario)
        assert report.feasible
        assert report.epsilon == pytest.approx(0.45)
        assert report.T_UC == pytest.approx(0.32)
        assert report.tuning_strategy == "shrink_epsilon"
        assert len(report.tuning_log) == 1
        assert report.T_SC_bound == pytest.approx(-math.log(0.45) / 2.0)

    def test_infeasible_is_reported_not_raised(self, infeasible_document):
        report = run_pipeline(without_tuning(infeasible_document))
        assert not report.feasible
        assert report.T_UC == pytest.approx(0.05)
        assert report.tuning_log == []

    def test_forced_strategy(self, infeasible_document):
        report = run_pipeline(without_tuning(infeasible_document), TuningStrategy.TIGHTEN_LIMITS)
        assert report.feasible
        assert report.epsilon == 0.9
        assert report.mc_limits.upper[0] == pytest.approx(0.8 ** 7)
        assert report.T_UC == pytest.approx(0.24)

    def test_exhausted_tuning_raises(self, infeasible_document):
        scenario = without_tuning(infeasible_document, max_steps=2)
        with pytest.raises(TuningExhausted):
            run_pipeline(scenario, "tighten_limits")

    def test_infeasible_certificate_has_no_machine_config(self, infeasible_document):
        report = run_pipeline(without_tuning(infeasible_document))
        with pytest.raises(ConfigError):
            report.rejuvenation_config()


@pytest.mark.slow
@pytest.mark.integration
class TestQuadrotorCertificate:
    """Test suite for the default quadrotor scenario."""

    def test_feasible(self, quadrotor_certificate):
        assert quadrotor_certificate.feasible
        assert quadrotor_certificate.T_UC > quadrotor_certificate.T_SR
        assert quadrotor_certificate.P.shape == (12, 12)

    def test_ellipsoid_verified(self, quadrotor_certificate):
        verification = quadrotor_certificate.verification
        assert verification.passed
        assert verification.max_containment <= 1.0 + 1e-8

    def test_safety_bound_is_finite(self, quadrotor_certificate):
        assert quadrotor_certificate.gamma > 0.0
        assert math.isfinite(quadrotor_certificate.T_SC_bound)

    def test_reach_sets_contain_linearized_trajectories(
        self, quadrotor_scenario, quadrotor_certificate, rng
    ):
        plant = resolve(quadrotor_scenario).plant
        timing = quadrotor_certificate.timing
        P, eps = quadrotor_certificate.P, quadrotor_certificate.epsilon
        U = quadrotor_certificate.mc_limits
        Ad, Bd = zoh_discretize(plant.A, plant.B, timing.grid_step)
        steps = int(round(timing.T_UC / timing.grid_step))
        runs = 10_000
        L = np.linalg.cholesky(P)
        d = rng.standard_normal((runs, 12))
        radii = math.sqrt(eps) * rng.uniform(size=(runs, 1)) ** (1 / 12)
        X = np.linalg.solve(L.T, (radii * d / np.linalg.norm(d, axis=1, keepdims=True)).T).T
        for k in range(1, steps + 1):
            corners = rng.integers(0, 2, size=(runs, 4)).astype(bool)
            inputs = np.where(corners, U.upper, U.lower)
            X = X @ Ad.T + inputs @ Bd.T
            assert timing.reach_contains(k, X, tol=1e-9)
            assert np.max(np.einsum("ij,jk,ik->i", X, P, X)) <= 1.0 + 1e-9


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--cov=src.testbed.pipeline"])
