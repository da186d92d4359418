"""Unit tests for the replication loop and metrics."""

from types import SimpleNamespace

import numpy as np
import pytest
from pydantic import ValidationError

from hd_cbps.core.exceptions import DataValidationError, SimulationAbortedError
from hd_cbps.simulation import runner
from hd_cbps.simulation.runner import (
    Scenario,
    ScenarioSpec,
    generate_replication,
    run_replication,
    run_scenario,
    summarize,
)


def fake_estimate(value=1.0):
    arm = SimpleNamespace(
        ci=(value - 0.1, value + 0.1),
        calibration=SimpleNamespace(converged=True),
        diagnostics={"sample_bounded": True, "kkt_ps": 1e-9, "kkt_outcome": 2e-9},
    )
    return SimpleNamespace(
        ate=value, mu1=value + 1.0, mu0=1.0,
        variance=1.0, variance_mu1=1.0, variance_mu0=1.0,
        ci=(value - 0.2, value + 0.2),
        treated=arm, control=arm,
    )


def failing_estimator(failed_calls):
    calls = []

    def estimate(data, config):
        calls.append(None)
        if len(calls) - 1 in failed_calls:
            raise DataValidationError("T", "injected failure")
        return fake_estimate()

    return estimate


class TestScenarioSpec:
    """Test scenario settings."""

    def test_defaults(self):
        """Test the default study setting."""
        spec = ScenarioSpec()

        assert (spec.n, spec.d, spec.rho, spec.replications) == (500, 1000, 0.5, 200)

    @pytest.mark.parametrize("kwargs", [{"n": 10}, {"d": 5}, {"rho": 1.0}, {"replications": 0}])
    def test_invalid(self, kwargs):
        """Test out-of-range settings are rejected."""
        with pytest.raises(ValidationError):
            ScenarioSpec(**kwargs)

    def test_scenario_flags(self):
        """Test which models each scenario misspecifies."""
        assert not Scenario.BOTH_CORRECT.ps_misspecified
        assert Scenario("ps-misspecified").ps_misspecified
        assert Scenario.OUTCOME_MISSPECIFIED.outcome_misspecified
        assert not Scenario.OUTCOME_MISSPECIFIED.ps_misspecified
        assert Scenario.BOTH_MISSPECIFIED.ps_misspecified and Scenario.BOTH_MISSPECIFIED.outcome_misspecified


class TestGenerateReplication:
    """Test replication datasets."""

    def test_deterministic(self):
        """Test a replication is reproducible from the master seed."""
        spec = ScenarioSpec(n=60, d=12)

        first, truth = generate_replication(spec, 3)
        second, _ = generate_replication(spec, 3)

        np.testing.assert_array_equal(first.X, second.X)
        np.testing.assert_array_equal(first.Y, second.Y)
        assert first.d == 13
        assert truth.ate == 1.0


class TestSummarize:
    """Test the metric algebra."""

    def test_metrics(self):
        """Test bias, spread, RMSE, coverage and interval length."""
        estimates = np.array([1.9, 2.1, 2.0, 2.2])
        metrics = summarize(
            estimates=estimates,
            variances=np.full(4, 4.0),
            lower=estimates - np.array([0.05, 0.2, 0.2, 0.1]),
            upper=estimates + 0.2,
            truth=2.0,
            n=100,
            estimand="mu1",
        )

        assert metrics.bias == pytest.approx(0.05)
        assert metrics.std_err == pytest.approx(np.std(estimates, ddof=1))
        assert (metrics.rmse * 2.0) ** 2 == pytest.approx(metrics.bias**2 + metrics.std_err**2 * 3 / 4)
        assert metrics.coverage == 0.75
        assert metrics.ci_length == pytest.approx(np.mean([0.25, 0.4, 0.4, 0.3]))
        assert metrics.mean_estimated_se == pytest.approx(0.2)
        assert metrics.mc_variance == pytest.approx(metrics.std_err**2)

    def test_zero_truth_not_standardized(self):
        """Test a zero truth leaves the RMSE on the raw scale."""
        metrics = summarize(np.array([0.1, -0.1]), np.ones(2), np.full(2, -1.0), np.full(2, 1.0), 0.0, 10, "ate")

        assert metrics.rmse == pytest.approx(0.1)
        assert metrics.coverage == 1.0


class TestRunScenario:
    """Test scenario runs."""

    def test_single_replication(self, fixed_config):
        """Test the bias of one replication is its error."""
        spec = ScenarioSpec(n=200, d=12, replications=1)
        config = fixed_config()

        report = run_scenario(spec, config, threads=1)
        result = run_replication(spec, config, 0)

        assert report.completed == 1
        assert report.metric("ate").bias == result.estimates["ate"] - 1.0
        assert report.metric("mu0").truth == 1.0

    def test_worker_count_irrelevant(self, fixed_config):
        """Test sequential and parallel runs give identical reports."""
        spec = ScenarioSpec(n=150, d=12, replications=3)
        config = fixed_config()

        sequential = run_scenario(spec, config, threads=1)
        parallel = run_scenario(spec, config, threads=2)

        assert sequential.model_dump() == parallel.model_dump()

    def test_failure_excluded(self, monkeypatch):
        """Test a failure within 2% is excluded and recorded."""
        monkeypatch.setattr(runner, "estimate_ate", failing_estimator({0}))

        report = run_scenario(ScenarioSpec(n=50, d=10, replications=50), threads=1)

        assert report.completed == 49
        assert list(report.failures) == [0]
        assert "injected failure" in report.failures[0]
        assert report.metric("ate").bias == pytest.approx(0.0)
        assert report.max_kkt_residual == 2e-9

    def test_abort_above_limit(self, monkeypatch):
        """Test more than 2% failures abort the run."""
        monkeypatch.setattr(runner, "estimate_ate", failing_estimator({0, 7}))

        with pytest.raises(SimulationAbortedError) as exc_info:
            run_scenario(ScenarioSpec(n=50, d=10, replications=50), threads=1)

        assert sorted(exc_info.value.failures) == [0, 7]
        assert exc_info.value.replications == 50

    def test_report_frame(self, monkeypatch):
        """Test the tabular report has one row per estimand."""
        monkeypatch.setattr(runner, "estimate_ate", failing_estimator(set()))

        frame = run_scenario(ScenarioSpec(n=50, d=10, replications=4), threads=1).to_frame()

        assert list(frame["estimand"]) == ["ate", "mu1", "mu0"]
        assert frame["scenario"].iloc[0] == "both-correct"
        assert (frame["replications"] == 4).all()
