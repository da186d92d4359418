"""Replication loop and metric reporting for the simulation scenarios."""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field

from hd_cbps.core.config import EstimatorConfig
from hd_cbps.core.estimate import estimate_ate
from hd_cbps.core.exceptions import HDCBPSException, SimulationAbortedError
from hd_cbps.core.model import Dataset
from hd_cbps.simulation.dgp import (
    ORACLE_DRAWS,
    OutcomeKind,
    StandardizationConstants,
    Truth,
    gen_covariates,
    gen_outcomes,
    gen_treatment,
    outcome_truth,
    replication_rng,
    standardization_constants,
    transform_mis,
)

METHOD = "HD-CBPS"
MAX_FAILURE_SHARE = 0.02


class Scenario(str, Enum):
    """Which models are misspecified."""
    BOTH_CORRECT = "both-correct"
    PS_MISSPECIFIED = "ps-misspecified"
    OUTCOME_MISSPECIFIED = "outcome-misspecified"
    BOTH_MISSPECIFIED = "both-misspecified"

    @property
    def ps_misspecified(self) -> bool:
        return self in (Scenario.PS_MISSPECIFIED, Scenario.BOTH_MISSPECIFIED)

    @property
    def outcome_misspecified(self) -> bool:
        return self in (Scenario.OUTCOME_MISSPECIFIED, Scenario.BOTH_MISSPECIFIED)


class ScenarioSpec(BaseModel):
    """One simulation setting."""
    scenario: Scenario = Scenario.BOTH_CORRECT
    n: int = Field(default=500, ge=20)
    d: int = Field(default=1000, ge=10)
    rho: float = Field(default=0.5, gt=-1.0, lt=1.0)
    replications: int = Field(default=200, ge=1)
    master_seed: int = 1
    outcome_kind: OutcomeKind = OutcomeKind.LINEAR
    trials: int = Field(default=8, ge=1)
    oracle_draws: int = Field(default=ORACLE_DRAWS, ge=1000)


@dataclass
class ReplicationResult:
    """Estimates from one replication, or the failure message."""
    index: int
    estimates: Optional[Dict[str, float]] = None
    variances: Optional[Dict[str, float]] = None
    intervals: Optional[Dict[str, Tuple[float, float]]] = None
    calibration_converged: bool = True
    sample_bounded: bool = True
    max_kkt: float = 0.0
    error: Optional[str] = None


class EstimandMetrics(BaseModel):
    """Metrics of one method on one estimand across replications."""
    method: str
    estimand: str
    truth: float
    bias: float
    std_err: float
    rmse: float
    coverage: float
    ci_length: float
    mean_estimated_se: float
    mean_variance_over_n: float
    mc_variance: float


class SimulationReport(BaseModel):
    """Aggregated metrics of a scenario run."""
    scenario: Scenario
    n: int
    d: int
    rho: float
    outcome_kind: OutcomeKind
    master_seed: int
    replications: int
    completed: int
    truth: Dict[str, float]
    metrics: List[EstimandMetrics]
    failures: Dict[int, str] = Field(default_factory=dict)
    calibration_failures: int = 0
    sample_bound_violations: int = 0
    max_kkt_residual: float = 0.0

    def metric(self, estimand: str = "ate", method: str = METHOD) -> EstimandMetrics:
        for row in self.metrics:
            if row.estimand == estimand and row.method == method:
                return row
        raise KeyError(f"no metrics for {method}/{estimand}")

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([row.model_dump() for row in self.metrics])
        frame.insert(0, "scenario", self.scenario.value)
        frame.insert(1, "n", self.n)
        frame.insert(2, "d", self.d)
        frame["replications"] = self.completed
        return frame


def generate_replication(
    spec: ScenarioSpec,
    replication: int,
    constants: Optional[StandardizationConstants] = None,
    truth: Optional[Truth] = None,
) -> Tuple[Dataset, Truth]:
    """
    Draw the dataset of one replication.

    The misspecified components are generated from the transformed
    covariates; the dataset always carries the untransformed ones.
    """
    rng = replication_rng(spec.master_seed, replication)
    X = gen_covariates(spec.n, spec.d, spec.rho, rng)
    scenario = Scenario(spec.scenario)
    X_mis = None
    if scenario.ps_misspecified or scenario.outcome_misspecified:
        X_mis = transform_mis(X, spec.rho, constants)

    T = gen_treatment(X_mis if scenario.ps_misspecified else X, rng)
    draw = gen_outcomes(
        X_mis if scenario.outcome_misspecified else X,
        T,
        spec.outcome_kind,
        rng,
        trials=spec.trials,
        misspecified=scenario.outcome_misspecified,
        rho=spec.rho,
        truth=truth,
    )
    return Dataset.from_arrays(X, T, draw.Y), draw.truth


def run_replication(
    spec: ScenarioSpec,
    config: EstimatorConfig,
    replication: int,
    constants: Optional[StandardizationConstants] = None,
    truth: Optional[Truth] = None,
) -> ReplicationResult:
    """Generate and estimate one replication; estimation failures are captured."""
    try:
        data, _ = generate_replication(spec, replication, constants, truth)
        estimate = estimate_ate(data, config)
    except (HDCBPSException, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.warning(f"Replication {replication} failed: {exc}")
        return ReplicationResult(index=replication, error=f"{type(exc).__name__}: {exc}")

    return ReplicationResult(
        index=replication,
        estimates={"ate": estimate.ate, "mu1": estimate.mu1, "mu0": estimate.mu0},
        variances={"ate": estimate.variance, "mu1": estimate.variance_mu1, "mu0": estimate.variance_mu0},
        intervals={
            "ate": estimate.ci,
            "mu1": estimate.treated.ci,
            "mu0": estimate.control.ci,
        },
        calibration_converged=estimate.treated.calibration.converged and estimate.control.calibration.converged,
        sample_bounded=bool(
            not estimate.treated.calibration.converged or estimate.treated.diagnostics["sample_bounded"]
        ),
        max_kkt=max(
            arm.diagnostics[key]
            for arm in (estimate.treated, estimate.control)
            for key in ("kkt_ps", "kkt_outcome")
        ),
    )


def _run_task(task) -> ReplicationResult:
    return run_replication(*task)


def summarize(
    estimates: np.ndarray,
    variances: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    truth: float,
    n: int,
    estimand: str,
    method: str = METHOD,
) -> EstimandMetrics:
    """
    Bias, Monte Carlo SD, standardized RMSE, coverage and interval length.

    The RMSE uses the population convention, so
    (rmse * truth)^2 = bias^2 + std_err^2 (R - 1) / R. It is standardized by
    |truth| unless the truth is zero.
    """
    errors = estimates - truth
    reps = estimates.size
    std_err = float(np.std(estimates, ddof=1)) if reps > 1 else 0.0
    rmse = float(np.sqrt(np.mean(errors**2)))
    if truth != 0:
        rmse /= abs(truth)
    return EstimandMetrics(
        method=method,
        estimand=estimand,
        truth=truth,
        bias=float(np.mean(errors)),
        std_err=std_err,
        rmse=rmse,
        coverage=float(np.mean((lower <= truth) & (truth <= upper))),
        ci_length=float(np.mean(upper - lower)),
        mean_estimated_se=float(np.mean(np.sqrt(variances / n))),
        mean_variance_over_n=float(np.mean(variances / n)),
        mc_variance=float(np.var(estimates, ddof=1)) if reps > 1 else 0.0,
    )


def run_scenario(
    spec: ScenarioSpec,
    config: Optional[EstimatorConfig] = None,
    threads: Optional[int] = None,
) -> SimulationReport:
    """
    Run all replications of a scenario and aggregate the metrics.

    Replications are independent and may run in worker processes; results
    are aggregated in replication order, so the report does not depend on
    the worker count.

    Args:
        spec: Scenario settings
        config: Estimator configuration
        threads: Worker processes (defaults to the available CPUs)

    Returns:
        SimulationReport

    Raises:
        SimulationAbortedError: More than 2% of the replications failed
    """
    config = config or EstimatorConfig()
    scenario = Scenario(spec.scenario)
    threads = threads or os.cpu_count() or 1

    constants = None
    if scenario.ps_misspecified or scenario.outcome_misspecified:
        constants = standardization_constants(spec.rho, spec.oracle_draws)
    truth = outcome_truth(
        spec.outcome_kind, scenario.outcome_misspecified, spec.rho, spec.trials, spec.oracle_draws
    )

    logger.info(
        f"Running scenario {scenario.value}: n={spec.n}, d={spec.d}, "
        f"{spec.replications} replications on {threads} worker(s)"
    )
    tasks = [(spec, config, r, constants, truth) for r in range(spec.replications)]
    if threads == 1:
        results = [_run_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_task, tasks))

    failures = {res.index: res.error for res in results if res.error is not None}
    if len(failures) > MAX_FAILURE_SHARE * spec.replications:
        raise SimulationAbortedError(failures, spec.replications)
    if failures:
        logger.warning(f"Excluding {len(failures)} failed replications")

    completed = [res for res in results if res.error is None]
    truths = {"ate": truth.ate, "mu1": truth.mu1, "mu0": truth.mu0}
    metrics = []
    for estimand in ("ate", "mu1", "mu0"):
        metrics.append(summarize(
            estimates=np.array([res.estimates[estimand] for res in completed]),
            variances=np.array([res.variances[estimand] for res in completed]),
            lower=np.array([res.intervals[estimand][0] for res in completed]),
            upper=np.array([res.intervals[estimand][1] for res in completed]),
            truth=truths[estimand],
            n=spec.n,
            estimand=estimand,
        ))

    report = SimulationReport(
        scenario=scenario,
        n=spec.n,
        d=spec.d,
        rho=spec.rho,
        outcome_kind=spec.outcome_kind,
        master_seed=spec.master_seed,
        replications=spec.replications,
        completed=len(completed),
        truth=truth.as_dict(),
        metrics=metrics,
        failures=failures,
        calibration_failures=sum(not res.calibration_converged for res in completed),
        sample_bound_violations=sum(not res.sample_bounded for res in completed),
        max_kkt_residual=max((res.max_kkt for res in completed), default=0.0),
    )
    ate = report.metric("ate")
    logger.info(
        f"Scenario {scenario.value}: bias={ate.bias:.4f}, RMSE={ate.rmse:.4f}, "
        f"coverage={ate.coverage:.3f}, CI length={ate.ci_length:.4f}"
    )
    return report
