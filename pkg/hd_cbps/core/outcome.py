"""Penalized outcome regressions within the treatment group."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger

from hd_cbps.core.exceptions import DataValidationError
from hd_cbps.core.model import (
    Dataset,
    ExponentialFamily,
    Gaussian,
    LogisticLink,
    OutcomeWeight,
)
from hd_cbps.core.optimize import (
    PenaltyConfig,
    SmoothObjective,
    SolverSettings,
    column_scale,
    fit_penalized,
    kkt_residual,
)
from hd_cbps.core.propensity import PropensityFit


@dataclass
class OutcomeFit:
    """
    Penalized outcome regression.

    Attributes:
        alpha: Coefficients of length d
        lambda_used: Penalty level
        family: Outcome family (gaussian for the weighted least squares fit)
        weights_applied: w2 values used per observation
        converged: Solver convergence flag
        gradient_residual: KKT residual of alpha
        scale: Column scales the penalty was standardized with
        treated_count: Number of treated rows the fit used
    """
    alpha: np.ndarray
    lambda_used: float
    family: ExponentialFamily
    weights_applied: np.ndarray
    converged: bool
    gradient_residual: float = 0.0
    scale: Optional[np.ndarray] = None
    treated_count: int = 0

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        return X @ self.alpha

    def fitted_mean(self, X: np.ndarray) -> np.ndarray:
        """Regression value b'(alpha' X_i); the identity for the linear fit."""
        return self.family.b_prime(self.linear_predictor(X))


def _check_weights(w2_values: np.ndarray, n: int) -> np.ndarray:
    w2_values = np.asarray(w2_values, dtype=float)
    if w2_values.shape != (n,):
        raise DataValidationError("w2", f"expected {n} weights, got shape {w2_values.shape}")
    if not np.all(np.isfinite(w2_values)) or np.any(w2_values <= 0):
        raise DataValidationError("w2", "outcome weights must be finite and strictly positive")
    return w2_values


def _treated_rows(data: Dataset, rows: Optional[np.ndarray]):
    rows = np.arange(data.n) if rows is None else np.asarray(rows)
    return rows[data.T[rows] == 1], rows.size


def weighted_ls_loss(alpha: np.ndarray, data: Dataset, w2_values: np.ndarray) -> float:
    """
    Weighted least squares loss (1/n) sum_i T_i w2_i (Y_i - alpha' X_i)^2.

    Args:
        alpha: Coefficient vector
        data: Dataset
        w2_values: Positive per-observation weights

    Returns:
        Loss value
    """
    w2_values = _check_weights(w2_values, data.n)
    return weighted_ls_objective(data, w2_values).value(np.asarray(alpha, dtype=float))


def weighted_ls_objective(
    data: Dataset,
    w2_values: np.ndarray,
    rows: Optional[np.ndarray] = None,
    scale: Optional[np.ndarray] = None,
) -> SmoothObjective:
    """Weighted least squares loss on a row subset; control rows never enter."""
    treated, n = _treated_rows(data, rows)
    X, Y, w = data.X[treated], data.Y[treated], w2_values[treated]

    def value(alpha):
        r = Y - X @ alpha
        return float(np.sum(w * r * r) / n)

    def gradient(alpha):
        return -2.0 * (X.T @ (w * (Y - X @ alpha))) / n

    mask = np.ones(data.d, dtype=bool)
    mask[0] = False
    return SmoothObjective(value, gradient, data.d, mask, scale)


def glm_objective(
    data: Dataset,
    family: ExponentialFamily,
    w2_values: np.ndarray,
    rows: Optional[np.ndarray] = None,
    scale: Optional[np.ndarray] = None,
) -> SmoothObjective:
    """Negated weighted log-likelihood -(1/n) sum_i T_i w2_i / a(phi) {Y_i u_i - b(u_i)}."""
    treated, n = _treated_rows(data, rows)
    X, Y = data.X[treated], data.Y[treated]
    w = w2_values[treated] / family.dispersion

    def value(alpha):
        u = X @ alpha
        with np.errstate(over="ignore", invalid="ignore"):
            return -float(np.sum(w * (Y * u - family.b(u))) / n)

    def gradient(alpha):
        with np.errstate(over="ignore", invalid="ignore"):
            return -(X.T @ (w * (Y - family.b_prime(X @ alpha)))) / n

    mask = np.ones(data.d, dtype=bool)
    mask[0] = False
    return SmoothObjective(value, gradient, data.d, mask, scale)


def _require_treated(data: Dataset, minimum: int = 2) -> None:
    if data.treated_count < minimum:
        raise DataValidationError(
            "T", f"outcome fit needs at least {minimum} treated rows, got {data.treated_count}"
        )


def fit_outcome_linear(
    data: Dataset,
    propensity_fit: PropensityFit,
    w2: OutcomeWeight,
    penalty: PenaltyConfig,
    settings: Optional[SolverSettings] = None,
    link: Optional[LogisticLink] = None,
) -> OutcomeFit:
    """
    Penalized weighted least squares fit of alpha on the treatment group.

    Args:
        data: Dataset
        propensity_fit: Step-1 fit supplying beta_hat for w2(beta_hat' X_i)
        w2: Outcome weight selector
        penalty: Penalty configuration
        settings: Solver settings
        link: Propensity link

    Returns:
        OutcomeFit with the gaussian family

    Raises:
        DataValidationError: Fewer than 2 treated rows or invalid weights
    """
    _require_treated(data)
    link = link or LogisticLink()
    w2_values = _check_weights(w2.evaluate(data.X @ propensity_fit.beta_hat, link), data.n)
    scale = column_scale(data.X)

    def build(rows):
        return weighted_ls_objective(data, w2_values, rows, scale)

    fit, _ = fit_penalized(build, data.n, penalty, settings, strata=data.T)
    residual = kkt_residual(build(None), fit.coef, fit.lam)
    if not fit.converged:
        logger.warning(f"Outcome fit did not converge (residual={residual:.3g})")
    logger.info(
        f"Outcome fit (linear, w2={w2.selector.value}): lambda={fit.lam:.4g}, "
        f"{int(np.count_nonzero(fit.coef[1:]))} nonzero covariates"
    )
    return OutcomeFit(
        alpha=fit.coef,
        lambda_used=fit.lam,
        family=Gaussian(),
        weights_applied=w2_values,
        converged=fit.converged,
        gradient_residual=residual,
        scale=scale,
        treated_count=data.treated_count,
    )


def fit_outcome_glm(
    data: Dataset,
    family: ExponentialFamily,
    w2_values: Optional[np.ndarray],
    penalty: PenaltyConfig,
    settings: Optional[SolverSettings] = None,
) -> OutcomeFit:
    """
    Penalized (weighted) maximum likelihood GLM fit on the treatment group.

    With all-one weights this is the initial unweighted fit; with w2 values
    it is the re-estimation step. For the gaussian family the loss is half
    the weighted squared error, so a penalty lam here matches 2 lam in
    ``fit_outcome_linear``.

    Args:
        data: Dataset
        family: Outcome family
        w2_values: Positive weights (None for all ones)
        penalty: Penalty configuration
        settings: Solver settings

    Returns:
        OutcomeFit

    Raises:
        InvalidOutcomeError: Treated outcomes outside the family's support
    """
    _require_treated(data)
    family.validate_response(data.Y[data.T == 1])
    w2_values = _check_weights(np.ones(data.n) if w2_values is None else w2_values, data.n)
    scale = column_scale(data.X)

    def build(rows):
        return glm_objective(data, family, w2_values, rows, scale)

    fit, _ = fit_penalized(build, data.n, penalty, settings, strata=data.T)
    residual = kkt_residual(build(None), fit.coef, fit.lam)
    if not fit.converged:
        logger.warning(f"GLM outcome fit did not converge (residual={residual:.3g})")
    logger.info(
        f"Outcome fit ({family.label}): lambda={fit.lam:.4g}, "
        f"{int(np.count_nonzero(fit.coef[1:]))} nonzero covariates"
    )
    return OutcomeFit(
        alpha=fit.coef,
        lambda_used=fit.lam,
        family=family,
        weights_applied=w2_values,
        converged=fit.converged,
        gradient_residual=residual,
        scale=scale,
        treated_count=data.treated_count,
    )
