"""Point estimation, variance and confidence intervals; pipeline orchestration."""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.stats import norm

from hd_cbps.core.balance import (
    CalibrationResult,
    Support,
    calibrate,
    extract_support,
)
from hd_cbps.core.config import EstimatorConfig
from hd_cbps.core.exceptions import ConfigurationError, HDCBPSException, InvalidLevelError
from hd_cbps.core.model import (
    Dataset,
    Pipeline,
    PropensityWeight,
    OutcomeWeight,
    W1,
    get_link,
)
from hd_cbps.core.outcome import OutcomeFit, fit_outcome_glm, fit_outcome_linear
from hd_cbps.core.propensity import PropensityFit, fit_initial_propensity


def horvitz_thompson(data: Dataset, tilde_pi: np.ndarray) -> float:
    """Horvitz-Thompson mean (1/n) sum_i T_i Y_i / pi_i."""
    return float(np.mean(data.T * data.Y / tilde_pi))


def hajek(data: Dataset, tilde_pi: np.ndarray) -> float:
    """Normalized inverse-probability weighted mean of treated outcomes."""
    weights = data.T / tilde_pi
    return float(np.sum(weights * data.Y) / np.sum(weights))


def aipw_glm(data: Dataset, tilde_pi: np.ndarray, outcome_fit: OutcomeFit) -> float:
    """
    Augmented estimate (1/n) sum T_i Y_i / pi_i - (1/n) sum (T_i / pi_i - 1) b'(alpha' X_i).

    Args:
        data: Dataset
        tilde_pi: Calibrated propensities
        outcome_fit: Outcome regression providing b'(alpha' X_i)

    Returns:
        Point estimate
    """
    fitted = outcome_fit.fitted_mean(data.X)
    correction = np.mean((data.T / tilde_pi - 1.0) * fitted)
    return horvitz_thompson(data, tilde_pi) - float(correction)


def variance_hat(
    data: Dataset,
    tilde_pi: np.ndarray,
    outcome_fit: OutcomeFit,
    mu1_hat: float,
    pipeline: Pipeline = Pipeline.LINEAR,
) -> float:
    """
    Plug-in variance (1/n) sum {T_i / pi_i^2 (Y_i - m_i)^2 + (m_i - mu1_hat)^2}.

    m_i is alpha' X_i for the linear pipeline and b'(alpha' X_i) for the GLM one.
    """
    if Pipeline(pipeline) is Pipeline.LINEAR:
        fitted = outcome_fit.linear_predictor(data.X)
    else:
        fitted = outcome_fit.fitted_mean(data.X)
    residual = np.where(data.T == 1, data.Y - fitted, 0.0)
    terms = data.T / tilde_pi**2 * residual**2 + (fitted - mu1_hat) ** 2
    return float(np.mean(terms))


def confidence_interval(estimate: float, v_hat: float, n: int, eta: float = 0.05) -> Tuple[float, float]:
    """
    Symmetric (1 - eta) normal interval estimate +- z_{1-eta/2} sqrt(V / n).

    Raises:
        InvalidLevelError: eta outside (0, 1)
    """
    if not 0.0 < eta < 1.0:
        raise InvalidLevelError(eta)
    if v_hat < 0 or n < 1:
        raise ValueError("variance must be nonnegative and n positive")
    half_width = float(norm.ppf(1.0 - eta / 2.0)) * np.sqrt(v_hat / n)
    return float(estimate - half_width), float(estimate + half_width)


@dataclass
class ArmEstimate:
    """
    Single-arm estimate of mu_t = E{Y(t)} with every intermediate artifact.

    Attributes:
        mu_hat: Point estimate
        variance: Plug-in variance V_hat
        ci: Confidence interval
        level: Confidence level 1 - eta
        propensity_fit: Initial propensity fit
        outcome_fit: Outcome fit used for support, basis and variance
        initial_outcome_fit: GLM initial (unweighted) fit, when run
        support: Selected support
        calibration: Calibration result
        fitted_mean: m_i per observation
        influence: T_i / pi_i (Y_i - m_i) + m_i per observation
        diagnostics: Scalar diagnostics
    """
    mu_hat: float
    variance: float
    ci: Tuple[float, float]
    level: float
    propensity_fit: PropensityFit
    outcome_fit: OutcomeFit
    initial_outcome_fit: Optional[OutcomeFit]
    support: Support
    calibration: CalibrationResult
    fitted_mean: np.ndarray = field(repr=False)
    influence: np.ndarray = field(repr=False)
    diagnostics: Dict[str, Any] = field(default_factory=dict)


@dataclass
class EffectEstimate:
    """
    Average treatment effect estimate combining the two arms.

    Attributes:
        mu1: Estimate of E{Y(1)}
        mu0: Estimate of E{Y(0)}
        ate: mu1 - mu0
        variance: Influence-based variance of the ATE
        ci: Confidence interval for the ATE
        level: Confidence level
        treated: Treated-arm estimate
        control: Control-arm estimate
    """
    mu1: float
    mu0: float
    ate: float
    variance: float
    ci: Tuple[float, float]
    level: float
    n: int
    treated: ArmEstimate
    control: ArmEstimate

    @property
    def variance_mu1(self) -> float:
        return self.treated.variance

    @property
    def variance_mu0(self) -> float:
        return self.control.variance

    @property
    def standard_error(self) -> float:
        return float(np.sqrt(self.variance / self.n))

    @property
    def diagnostics(self) -> Dict[str, Any]:
        """Flat arm diagnostics, keyed ``treated_<name>`` and ``control_<name>``."""
        return {
            f"{arm}_{key}": value
            for arm, estimate in (("treated", self.treated), ("control", self.control))
            for key, value in estimate.diagnostics.items()
        }

    def to_dict(self) -> Dict[str, Any]:
        """Estimate document written by the ``estimate`` command."""
        return {
            "mu1": self.mu1,
            "mu0": self.mu0,
            "ate": self.ate,
            "variance": self.variance,
            "variance_mu1": self.variance_mu1,
            "variance_mu0": self.variance_mu0,
            "ci": [self.ci[0], self.ci[1]],
            "level": self.level,
            "diagnostics": self.diagnostics,
        }


def check_compatibility(data: Dataset, config: EstimatorConfig) -> None:
    """
    Reject data/configuration conflicts before any fitting.

    Raises:
        ConfigurationError: Outcomes incompatible with the configured family
    """
    try:
        config.family_instance().validate_response(data.Y)
    except HDCBPSException as exc:
        raise ConfigurationError("family", str(exc))


def _fit_outcome(
    data: Dataset,
    config: EstimatorConfig,
    propensity_fit: PropensityFit,
    initial_fit: Optional[OutcomeFit],
    link,
) -> OutcomeFit:
    w2 = OutcomeWeight(config.w2)
    if config.resolved_pipeline is Pipeline.LINEAR:
        return fit_outcome_linear(data, propensity_fit, w2, config.outcome_penalty, config.solver, link)
    if config.skip_outcome_refit:
        return initial_fit
    w2_values = w2.evaluate(data.X @ propensity_fit.beta_hat, link)
    return fit_outcome_glm(data, config.family_instance(), w2_values, config.outcome_penalty, config.solver)


def estimate_mu1(data: Dataset, config: Optional[EstimatorConfig] = None) -> ArmEstimate:
    """
    Estimate E{Y(1)} for the arm marked by T = 1.

    Runs the initial propensity fit, the outcome fit(s), support extraction,
    calibration, the point estimator (HT for linear, AIPW for GLM), the
    plug-in variance and the confidence interval.

    Args:
        data: Dataset
        config: Estimator configuration

    Returns:
        ArmEstimate with all intermediate artifacts
    """
    config = config or EstimatorConfig()
    link = get_link(config.link)
    pipeline = config.resolved_pipeline
    family = config.family_instance()

    initial_fit = None
    if pipeline is Pipeline.GLM and not config.skip_initial_outcome:
        initial_fit = fit_outcome_glm(data, family, None, config.outcome_penalty, config.solver)

    if config.w1 is W1.BPP:
        constants = family.b_double_prime(initial_fit.linear_predictor(data.X))
        w1 = PropensityWeight(W1.BPP, constants)
    else:
        w1 = PropensityWeight(config.w1)

    propensity_fit = fit_initial_propensity(data, w1, link, config.propensity_penalty, config.solver)
    outcome_fit = _fit_outcome(data, config, propensity_fit, initial_fit, link)
    support = extract_support(outcome_fit, config.calibration.zero_threshold, data.treated_count)
    calibration = calibrate(data, support, propensity_fit, outcome_fit, pipeline, config.calibration, link)
    tilde_pi = calibration.tilde_pi

    if pipeline is Pipeline.LINEAR:
        mu_hat = horvitz_thompson(data, tilde_pi)
        fitted = outcome_fit.linear_predictor(data.X)
    else:
        mu_hat = aipw_glm(data, tilde_pi, outcome_fit)
        fitted = outcome_fit.fitted_mean(data.X)

    variance = variance_hat(data, tilde_pi, outcome_fit, mu_hat, pipeline)
    ci = confidence_interval(mu_hat, variance, data.n, config.eta)
    residual = np.where(data.T == 1, data.Y - fitted, 0.0)
    influence = data.T / tilde_pi * residual + fitted

    treated_y = data.Y[data.T == 1]
    diagnostics = {
        "support_size": support.size,
        "balance_residual_inf_norm": calibration.residual_inf,
        "calibration_converged": calibration.converged,
        "min_pi": float(np.min(tilde_pi)),
        "max_pi": float(np.max(tilde_pi)),
        "sample_bounded": bool(treated_y.min() <= mu_hat <= treated_y.max()),
        "lambda_ps": propensity_fit.lambda_used,
        "lambda_outcome": outcome_fit.lambda_used,
        "kkt_ps": propensity_fit.gradient_residual,
        "kkt_outcome": outcome_fit.gradient_residual,
    }
    logger.info(f"mu_hat={mu_hat:.6g} (V_hat={variance:.4g}, |S|={support.size})")

    return ArmEstimate(
        mu_hat=mu_hat,
        variance=variance,
        ci=ci,
        level=config.level,
        propensity_fit=propensity_fit,
        outcome_fit=outcome_fit,
        initial_outcome_fit=initial_fit,
        support=support,
        calibration=calibration,
        fitted_mean=fitted,
        influence=influence,
        diagnostics=diagnostics,
    )


def estimate_ate(data: Dataset, config: Optional[EstimatorConfig] = None) -> EffectEstimate:
    """
    Estimate the average treatment effect E{Y(1) - Y(0)}.

    Each arm runs its own pipeline; the control arm is estimated on the
    label-swapped data. The ATE variance is the mean squared difference of
    the per-arm influence contributions.

    Args:
        data: Dataset
        config: Estimator configuration

    Returns:
        EffectEstimate
    """
    config = config or EstimatorConfig()
    logger.info(f"Estimating ATE on n={data.n}, d={data.d} ({config.resolved_pipeline.value} pipeline)")

    treated = estimate_mu1(data, config)
    control = estimate_mu1(data.flip(), config)

    ate = treated.mu_hat - control.mu_hat
    psi = treated.influence - control.influence - ate
    variance = float(np.mean(psi**2))
    ci = confidence_interval(ate, variance, data.n, config.eta)

    return EffectEstimate(
        mu1=treated.mu_hat,
        mu0=control.mu_hat,
        ate=ate,
        variance=variance,
        ci=ci,
        level=config.level,
        n=data.n,
        treated=treated,
        control=control,
    )
