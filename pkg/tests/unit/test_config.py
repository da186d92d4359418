"""Unit tests for configuration files and logging setup."""

from pathlib import Path

import pytest
from loguru import logger

from hd_cbps.core.exceptions import ConfigurationError
from hd_cbps.core.model import W2
from hd_cbps.utils.config import (
    estimator_config_from_dict,
    get_default_config,
    load_config,
    save_config,
)
from hd_cbps.utils.logger import setup_logger

REPO_CONFIG = Path(__file__).parents[2] / "config" / "config.yaml"


class TestLoadConfig:
    """Test YAML configuration handling."""

    def test_missing_file_uses_defaults(self, tmp_path):
        """Test a missing file falls back to the defaults."""
        assert load_config(str(tmp_path / "absent.yaml")) == get_default_config()

    def test_save_and_load(self, tmp_path):
        """Test a saved configuration loads back unchanged."""
        path = tmp_path / "conf" / "config.yaml"
        config = get_default_config()
        config["estimator"]["level"] = 0.9

        assert save_config(config, str(path))
        assert load_config(str(path)) == config

    def test_repository_config_valid(self):
        """Test the shipped config file builds a valid estimator configuration."""
        config = load_config(str(REPO_CONFIG))

        estimator = estimator_config_from_dict(config["estimator"])

        assert estimator.w2 is W2.PS_ADJUSTED
        assert estimator.propensity_penalty.n_lambdas == 50
        assert config["simulation"]["d"] == 1000


class TestEstimatorConfigFromDict:
    """Test building estimator configurations."""

    def test_defaults(self):
        """Test the default section."""
        config = estimator_config_from_dict(get_default_config()["estimator"])

        assert config.level == 0.95
        assert config.calibration.tolerance == 1e-10

    def test_overrides(self):
        """Test overrides win and None overrides are ignored."""
        section = get_default_config()["estimator"]

        config = estimator_config_from_dict(
            section,
            {"level": 0.9, "w1": None, "outcome_penalty": {"mode": "fixed", "lam": 0.1}},
        )

        assert config.level == 0.9
        assert config.w1.value == "one"
        assert config.outcome_penalty.mode == "fixed"
        assert config.outcome_penalty.n_folds == 5

    def test_invalid_combination(self):
        """Test invalid values surface as configuration errors."""
        with pytest.raises(ConfigurationError) as exc_info:
            estimator_config_from_dict({"level": 2.0})

        assert exc_info.value.option == "level"

    def test_empty_section(self):
        """Test a missing section gives the default estimator."""
        assert estimator_config_from_dict(None).family == "gaussian"


class TestSetupLogger:
    """Test logger setup."""

    def test_file_sink(self, tmp_path):
        """Test messages reach the log file."""
        log_file = tmp_path / "logs" / "run.log"

        setup_logger("DEBUG", str(log_file))
        logger.info("calibration finished")
        logger.complete()
        setup_logger("WARNING", None)

        assert "calibration finished" in log_file.read_text()
