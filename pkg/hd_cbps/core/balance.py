"""Covariate-balancing calibration of the propensity coefficients.

The initial coefficients are re-solved on the outcome support S so that

    (1/n) sum_i {T_i / pi(gamma' X_iS + beta_hat' X_iS^c) - 1} f_i = 0

with f_i = X_iS (linear pipeline) or b''(alpha' X_i) X_iS (GLM pipeline).
The system has |S| equations and |S| unknowns.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from hd_cbps.core.exceptions import OverSaturatedSupportError
from hd_cbps.core.model import Dataset, LogisticLink, Pipeline
from hd_cbps.core.outcome import OutcomeFit
from hd_cbps.core.propensity import PropensityFit


class CalibrationSettings(BaseModel):
    """Settings for support extraction and the balancing solve."""
    max_iterations: int = Field(default=200, ge=1)
    tolerance: float = Field(default=1e-10, gt=0.0)
    damping: float = Field(default=1e-3, gt=0.0)
    zero_threshold: float = Field(default=1e-8, ge=0.0)
    pi_clip: float = Field(default=1e-6, gt=0.0, lt=0.5)


@dataclass(frozen=True)
class Support:
    """Selected outcome support; index 0 (intercept) is always included."""
    indices: Tuple[int, ...]

    def __post_init__(self):
        indices = tuple(sorted(set(int(j) for j in self.indices) | {0}))
        object.__setattr__(self, "indices", indices)

    @property
    def includes_intercept(self) -> bool:
        return 0 in self.indices

    @property
    def size(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)

    def complement(self, d: int) -> np.ndarray:
        mask = np.ones(d, dtype=bool)
        mask[self.as_array()] = False
        return np.flatnonzero(mask)


@dataclass
class CalibrationResult:
    """
    Calibrated propensity model.

    Attributes:
        gamma: Coefficients on the support
        tilde_beta: Full coefficients (gamma on S, beta_hat elsewhere)
        tilde_pi: pi(tilde_beta' X_i), clipped for downstream weighting
        residual_norm: Euclidean norm of the balancing residual
        residual_inf: Max-norm of the balancing residual
        converged: Whether residual_inf reached the tolerance
        iterations: Solver iterations used
    """
    gamma: np.ndarray
    tilde_beta: np.ndarray
    tilde_pi: np.ndarray
    residual_norm: float
    residual_inf: float
    converged: bool
    iterations: int


def extract_support(
    outcome_fit: OutcomeFit,
    zero_threshold: float = 1e-8,
    treated_count: Optional[int] = None,
) -> Support:
    """
    Support {0} plus the coordinates with |alpha_j| above the threshold.

    The threshold applies on the standardized scale |alpha_j| * sd_j.

    Args:
        outcome_fit: Outcome regression
        zero_threshold: Round-off guard
        treated_count: Treated rows available (defaults to the fit's count)

    Returns:
        Support

    Raises:
        OverSaturatedSupportError: More support coordinates than treated rows
    """
    if zero_threshold < 0:
        raise ValueError("zero threshold must be nonnegative")
    alpha = np.asarray(outcome_fit.alpha, dtype=float)
    scale = outcome_fit.scale if outcome_fit.scale is not None else np.ones_like(alpha)
    selected = np.flatnonzero(np.abs(alpha * scale) > zero_threshold)
    support = Support(tuple(selected))

    treated = treated_count if treated_count is not None else outcome_fit.treated_count
    if treated and support.size > treated:
        raise OverSaturatedSupportError(support.size, treated)
    return support


def balance_basis(
    data: Dataset,
    support: Support,
    outcome_fit: OutcomeFit,
    pipeline: Pipeline,
) -> np.ndarray:
    """Balancing functions f_i as an n x |S| matrix."""
    X_s = data.X[:, support.as_array()]
    if Pipeline(pipeline) is Pipeline.LINEAR:
        return X_s
    weights = outcome_fit.family.b_double_prime(outcome_fit.linear_predictor(data.X))
    return weights[:, None] * X_s


def _offset(data: Dataset, support: Support, beta_hat: np.ndarray) -> np.ndarray:
    rest = support.complement(data.d)
    return data.X[:, rest] @ np.asarray(beta_hat, dtype=float)[rest]


def balance_residual(
    gamma: np.ndarray,
    data: Dataset,
    support: Support,
    beta_hat: np.ndarray,
    basis: np.ndarray,
    link: LogisticLink,
) -> np.ndarray:
    """
    Balancing residual g_n(gamma).

    Args:
        gamma: Coefficients on the support
        data: Dataset
        support: Outcome support
        beta_hat: Initial propensity coefficients (used off the support)
        basis: Balancing functions f_i, n x |S|
        link: Propensity link

    Returns:
        Vector of length |S|
    """
    m = data.X[:, support.as_array()] @ np.asarray(gamma, dtype=float)
    m = m + _offset(data, support, beta_hat)
    return basis.T @ (data.T / link.pi(m) - 1.0) / data.n


def _levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    settings: CalibrationSettings,
) -> Tuple[np.ndarray, np.ndarray, int, bool]:
    x = np.array(x0, dtype=float)
    r = residual(x)
    if np.max(np.abs(r)) <= settings.tolerance:
        return x, r, 0, True

    J = jacobian(x)
    A = J.T @ J
    g = J.T @ r
    mu = settings.damping * max(float(np.max(np.diag(A))), np.finfo(float).tiny)
    nu = 2.0
    eye = np.eye(x.size)

    for iteration in range(1, settings.max_iterations + 1):
        try:
            h = np.linalg.solve(A + mu * eye, -g)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue

        if np.linalg.norm(h) <= 1e-15 * (np.linalg.norm(x) + 1e-15):
            break

        x_new = x + h
        r_new = residual(x_new)
        predicted = 0.5 * (h @ (mu * h - g))
        actual = 0.5 * (r @ r - r_new @ r_new)
        rho = actual / predicted if predicted > 0 else -1.0

        if np.all(np.isfinite(r_new)) and rho > 0:
            x, r = x_new, r_new
            if np.max(np.abs(r)) <= settings.tolerance:
                return x, r, iteration, True
            J = jacobian(x)
            A = J.T @ J
            g = J.T @ r
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2.0

    return x, r, iteration, False


def calibrate(
    data: Dataset,
    support: Support,
    propensity_fit: PropensityFit,
    outcome_fit: OutcomeFit,
    pipeline: Pipeline = Pipeline.LINEAR,
    settings: Optional[CalibrationSettings] = None,
    link: Optional[LogisticLink] = None,
) -> CalibrationResult:
    """
    Solve the balancing equations on the support, starting from beta_hat_S.

    Args:
        data: Dataset
        support: Outcome support from ``extract_support``
        propensity_fit: Initial propensity fit
        outcome_fit: Outcome fit (its b'' enters the GLM basis)
        pipeline: Linear or GLM balancing functions
        settings: Calibration settings
        link: Propensity link

    Returns:
        CalibrationResult; ``converged`` is False when the residual stays
        above tolerance, and estimation may proceed with that flag recorded

    Raises:
        OverSaturatedSupportError: |S| exceeds the treated count
    """
    settings = settings or CalibrationSettings()
    link = link or LogisticLink()
    if support.size > data.treated_count:
        raise OverSaturatedSupportError(support.size, data.treated_count)

    S = support.as_array()
    X_s = data.X[:, S]
    beta_hat = np.asarray(propensity_fit.beta_hat, dtype=float)
    offset = _offset(data, support, beta_hat)
    basis = balance_basis(data, support, outcome_fit, pipeline)

    def residual(gamma):
        return basis.T @ (data.T / link.pi(X_s @ gamma + offset) - 1.0) / data.n

    def jacobian(gamma):
        ratio = data.T * link.ps_ratio(X_s @ gamma + offset)
        return -(basis * ratio[:, None]).T @ X_s / data.n

    gamma, r, iterations, converged = _levenberg_marquardt(residual, jacobian, beta_hat[S], settings)

    tilde_beta = beta_hat.copy()
    tilde_beta[S] = gamma
    tilde_pi = np.clip(link.pi(data.X @ tilde_beta), settings.pi_clip, 1.0 - settings.pi_clip)

    residual_inf = float(np.max(np.abs(r)))
    if converged:
        logger.info(f"Calibration on |S|={support.size} converged in {iterations} iterations")
    else:
        logger.warning(
            f"Calibration on |S|={support.size} did not converge "
            f"(residual={residual_inf:.3g} after {iterations} iterations)"
        )

    return CalibrationResult(
        gamma=gamma,
        tilde_beta=tilde_beta,
        tilde_pi=tilde_pi,
        residual_norm=float(np.linalg.norm(r)),
        residual_inf=residual_inf,
        converged=converged,
        iterations=iterations,
    )
