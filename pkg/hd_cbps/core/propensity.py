"""Initial penalized propensity fit (maximizing the quasi-likelihood)."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger

from hd_cbps.core.exceptions import DataValidationError
from hd_cbps.core.model import (
    Dataset,
    LogisticLink,
    PropensityWeight,
    check_logistic,
    quasi_likelihood_terms,
)
from hd_cbps.core.optimize import (
    PenaltyConfig,
    SmoothObjective,
    SolverSettings,
    column_scale,
    fit_penalized,
    kkt_residual,
)


@dataclass
class PropensityFit:
    """
    Initial propensity estimate.

    Attributes:
        beta_hat: Coefficients of length d
        lambda_used: Penalty level of the final fit
        converged: Solver convergence flag
        gradient_residual: KKT residual of the returned coefficients
        fitted_pi: pi(beta_hat' X_i)
    """
    beta_hat: np.ndarray
    lambda_used: float
    converged: bool
    gradient_residual: float
    fitted_pi: np.ndarray


def quasi_score(
    beta: np.ndarray,
    data: Dataset,
    w1: PropensityWeight,
    link: LogisticLink,
) -> np.ndarray:
    """
    Gradient of Q_n: (1/n) sum_i {T_i / pi(beta' X_i) - 1} w1_i X_i.

    Args:
        beta: Coefficient vector
        data: Dataset
        w1: Propensity weight selector
        link: Propensity link

    Returns:
        Length-d score vector
    """
    m = data.X @ np.asarray(beta, dtype=float)
    return _score(m, data.X, data.T, w1, link, None)


def _score(m, X, T, w1, link, rows):
    factor = (T / link.pi(m) - 1.0) * w1.evaluate(m, link, rows)
    return X.T @ factor / X.shape[0]


def propensity_objective(
    data: Dataset,
    w1: PropensityWeight,
    link: LogisticLink,
    rows: Optional[np.ndarray] = None,
    scale: Optional[np.ndarray] = None,
) -> SmoothObjective:
    """
    Negated quasi-likelihood -Q_n on a row subset.

    Args:
        data: Dataset
        w1: Propensity weight selector
        link: Propensity link
        rows: Row indices (None for all rows)
        scale: Penalty multipliers per coordinate

    Returns:
        Smooth objective with the intercept unpenalized
    """
    X = data.X if rows is None else data.X[rows]
    T = data.T if rows is None else data.T[rows]
    n = X.shape[0]

    def value(beta):
        return -float(np.sum(quasi_likelihood_terms(X @ beta, T, w1, rows)) / n)

    def gradient(beta):
        return -_score(X @ beta, X, T, w1, link, rows)

    mask = np.ones(data.d, dtype=bool)
    mask[0] = False
    return SmoothObjective(value, gradient, data.d, mask, scale)


def fit_initial_propensity(
    data: Dataset,
    w1: PropensityWeight,
    link: LogisticLink,
    penalty: PenaltyConfig,
    settings: Optional[SolverSettings] = None,
) -> PropensityFit:
    """
    Penalized initial propensity coefficients beta_hat = argmin -Q_n + lam |beta|_1.

    Args:
        data: Dataset
        w1: Propensity weight selector (bpp needs the GLM constants)
        link: Propensity link
        penalty: Fixed level, theory level or CV settings
        settings: Solver settings

    Returns:
        PropensityFit

    Raises:
        DataValidationError: All rows treated or all rows control
    """
    check_logistic(link)
    if data.treated_count in (0, data.n):
        raise DataValidationError("T", "propensity fit needs both treated and control rows")

    scale = column_scale(data.X)

    def build(rows):
        return propensity_objective(data, w1, link, rows, scale)

    fit, _ = fit_penalized(build, data.n, penalty, settings, strata=data.T)
    residual = kkt_residual(build(None), fit.coef, fit.lam)
    if not fit.converged:
        logger.warning(f"Propensity fit did not converge (residual={residual:.3g})")

    support = int(np.count_nonzero(fit.coef[1:]))
    logger.info(
        f"Propensity fit: w1={w1.selector.value}, lambda={fit.lam:.4g}, "
        f"{support} nonzero covariates"
    )
    return PropensityFit(
        beta_hat=fit.coef,
        lambda_used=fit.lam,
        converged=fit.converged,
        gradient_residual=residual,
        fitted_pi=link.pi(data.X @ fit.coef),
    )
