"""Simulation study: data-generating processes and the replication runner."""

from hd_cbps.simulation.dgp import (
    OutcomeKind,
    Truth,
    gen_covariates,
    gen_outcomes,
    gen_treatment,
    outcome_truth,
    transform_mis,
)
from hd_cbps.simulation.runner import Scenario, ScenarioSpec, SimulationReport, run_scenario

__all__ = [
    "OutcomeKind",
    "Scenario",
    "ScenarioSpec",
    "SimulationReport",
    "Truth",
    "gen_covariates",
    "gen_outcomes",
    "gen_treatment",
    "outcome_truth",
    "run_scenario",
    "transform_mis",
]
