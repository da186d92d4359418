"""Estimation core: model primitives, solvers and the estimation pipeline."""

from hd_cbps.core.balance import CalibrationResult, CalibrationSettings, Support, calibrate, extract_support
from hd_cbps.core.config import EstimatorConfig
from hd_cbps.core.estimate import (
    ArmEstimate,
    EffectEstimate,
    aipw_glm,
    confidence_interval,
    estimate_ate,
    estimate_mu1,
    hajek,
    horvitz_thompson,
    variance_hat,
)
from hd_cbps.core.exceptions import (
    ConfigurationError,
    DataValidationError,
    DegenerateFoldError,
    HDCBPSException,
    InvalidLevelError,
    InvalidObjectiveError,
    InvalidOutcomeError,
    OverSaturatedSupportError,
    SimulationAbortedError,
    UnsupportedLinkError,
)
from hd_cbps.core.model import (
    Binomial,
    Dataset,
    ExponentialFamily,
    Gaussian,
    LogisticLink,
    OutcomeWeight,
    Pipeline,
    Poisson,
    PropensityWeight,
    W1,
    W2,
    get_family,
    get_link,
)
from hd_cbps.core.optimize import PenaltyConfig, SolverSettings, minimize_l1
from hd_cbps.core.outcome import OutcomeFit, fit_outcome_glm, fit_outcome_linear
from hd_cbps.core.propensity import PropensityFit, fit_initial_propensity

__all__ = [
    "ArmEstimate",
    "Binomial",
    "CalibrationResult",
    "CalibrationSettings",
    "ConfigurationError",
    "DataValidationError",
    "Dataset",
    "DegenerateFoldError",
    "EffectEstimate",
    "EstimatorConfig",
    "ExponentialFamily",
    "Gaussian",
    "HDCBPSException",
    "InvalidLevelError",
    "InvalidObjectiveError",
    "InvalidOutcomeError",
    "LogisticLink",
    "OutcomeFit",
    "OutcomeWeight",
    "OverSaturatedSupportError",
    "PenaltyConfig",
    "Pipeline",
    "Poisson",
    "PropensityFit",
    "PropensityWeight",
    "SimulationAbortedError",
    "SolverSettings",
    "Support",
    "UnsupportedLinkError",
    "W1",
    "W2",
    "aipw_glm",
    "calibrate",
    "confidence_interval",
    "estimate_ate",
    "estimate_mu1",
    "extract_support",
    "fit_initial_propensity",
    "fit_outcome_glm",
    "fit_outcome_linear",
    "get_family",
    "get_link",
    "hajek",
    "horvitz_thompson",
    "minimize_l1",
    "variance_hat",
]
