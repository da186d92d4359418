"""Shared fixtures and the ``slow`` marker for Monte Carlo acceptance tests."""

import numpy as np
import pytest

from hd_cbps.core.config import EstimatorConfig
from hd_cbps.core.model import Dataset
from hd_cbps.core.optimize import PenaltyConfig
from hd_cbps.simulation.dgp import Truth, gen_covariates, gen_outcomes, gen_treatment, make_rng


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run Monte Carlo acceptance tests"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo acceptance test (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def simulated_data():
    """Factory for small correctly specified linear datasets."""
    def build(n=300, d=12, seed=0, kind="linear", trials=8):
        rng = make_rng(seed)
        X = gen_covariates(n, d, 0.5, rng)
        T = gen_treatment(X, rng)
        truth = None if kind == "linear" else Truth(0.0, 0.0)
        draw = gen_outcomes(X, T, kind, rng, trials=trials, truth=truth)
        return Dataset.from_arrays(X, T, draw.Y)
    return build


@pytest.fixture
def fixed_config():
    """Estimator configuration with fixed penalties (no cross-validation)."""
    def build(lam=0.02, lam_outcome=0.05, **kwargs):
        return EstimatorConfig(
            propensity_penalty=PenaltyConfig(mode="fixed", lam=lam),
            outcome_penalty=PenaltyConfig(mode="fixed", lam=lam_outcome),
            **kwargs
        )
    return build


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
