"""Configuration management."""

from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv
from loguru import logger
from pydantic import ValidationError

from hd_cbps.core.config import EstimatorConfig
from hd_cbps.core.exceptions import ConfigurationError


def load_config(config_path: str = "config/config.yaml") -> Dict[str, Any]:
    """
    Load configuration from YAML file.

    Args:
        config_path: Path to configuration file

    Returns:
        Configuration dictionary
    """
    load_dotenv()

    path = Path(config_path)

    if not path.exists():
        logger.warning(f"Config file not found: {config_path}, using defaults")
        return get_default_config()

    try:
        with open(path, 'r') as f:
            config = yaml.safe_load(f) or {}

        logger.debug(f"Loaded configuration from: {config_path}")
        return config

    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Failed to load config: {e}")
        return get_default_config()


def get_default_config() -> Dict[str, Any]:
    """
    Get default configuration.

    Returns:
        Default configuration dictionary
    """
    return {
        "estimator": {
            "family": "gaussian",
            "link": "logistic",
            "w1": "one",
            "w2": "ps-adjusted",
            "level": 0.95,
            "propensity_penalty": {"mode": "cv", "n_folds": 5, "seed": 0, "n_lambdas": 50, "lambda_ratio": 0.001},
            "outcome_penalty": {"mode": "cv", "n_folds": 5, "seed": 0, "n_lambdas": 50, "lambda_ratio": 0.001},
            "solver": {"max_iterations": 10000, "tolerance": 1.0e-8},
            "calibration": {"max_iterations": 200, "tolerance": 1.0e-10, "zero_threshold": 1.0e-8},
        },
        "simulation": {
            "scenario": "both-correct",
            "n": 500,
            "d": 1000,
            "rho": 0.5,
            "replications": 200,
            "master_seed": 1,
            "outcome_kind": "linear",
        },
        "logging": {
            "level": "INFO",
            "log_file": "logs/hd_cbps.log",
            "rotation": "10 MB",
            "retention": "1 week"
        }
    }


def save_config(config: Dict[str, Any], config_path: str = "config/config.yaml") -> bool:
    """
    Save configuration to YAML file.

    Args:
        config: Configuration dictionary
        config_path: Path to save configuration

    Returns:
        True if successful
    """
    path = Path(config_path)
    path.parent.mkdir(parents=True, exist_ok=True)

    try:
        with open(path, 'w') as f:
            yaml.dump(config, f, default_flow_style=False, sort_keys=False)

        logger.info(f"Saved configuration to: {config_path}")
        return True

    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Failed to save config: {e}")
        return False


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        elif value is not None:
            merged[key] = value
    return merged


def estimator_config_from_dict(
    section: Optional[Dict[str, Any]],
    overrides: Optional[Dict[str, Any]] = None,
) -> EstimatorConfig:
    """
    Build an EstimatorConfig from the ``estimator`` section of a config file.

    Args:
        section: Parsed ``estimator`` section (may be None)
        overrides: Values taking precedence over the file (None entries ignored)

    Returns:
        EstimatorConfig

    Raises:
        ConfigurationError: The combined options are invalid
    """
    values = _merge(section or {}, overrides or {})
    try:
        return EstimatorConfig.model_validate(values)
    except ValidationError as exc:
        first = exc.errors()[0]
        option = ".".join(str(part) for part in first.get("loc", ())) or "estimator"
        raise ConfigurationError(option, first.get("msg", str(exc)))
