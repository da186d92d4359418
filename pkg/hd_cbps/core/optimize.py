"""L1-penalized minimization of smooth convex objectives.

Accelerated proximal gradient with backtracking and function-value
restarts, an independent KKT checker, geometric penalty paths and
seeded K-fold selection of the penalty level.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, model_validator
from sklearn.model_selection import KFold, StratifiedKFold

from hd_cbps.core.exceptions import DegenerateFoldError, InvalidObjectiveError

# Largest Lipschitz estimate tried before the line search gives up
_MAX_LIPSCHITZ = 1e30


class SolverSettings(BaseModel):
    """Settings for the proximal gradient solver."""
    max_iterations: int = Field(default=10_000, ge=1)
    tolerance: float = Field(default=1e-8, gt=0.0)
    initial_step: float = Field(default=1.0, gt=0.0)
    shrink: float = Field(default=0.5, gt=0.0, lt=1.0)


class PenaltyConfig(BaseModel):
    """
    How the penalty level of a fit is chosen.

    Modes:
        fixed: use ``lam`` as given
        cv: K-fold cross-validation over a geometric grid
        theory: ``theory_scale * sqrt(log(max(d, n)) / n)``
    """
    mode: Literal["cv", "fixed", "theory"] = "cv"
    lam: Optional[float] = Field(default=None, ge=0.0)
    n_folds: int = Field(default=5, ge=2)
    seed: int = 0
    n_lambdas: int = Field(default=50, ge=1)
    lambda_ratio: float = Field(default=1e-3, gt=0.0, lt=1.0)
    theory_scale: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="after")
    def _check_fixed(self) -> "PenaltyConfig":
        if self.mode == "fixed" and self.lam is None:
            raise ValueError("fixed penalty mode requires 'lam'")
        return self


@dataclass(frozen=True)
class SmoothObjective:
    """
    Smooth convex loss f with its gradient.

    Attributes:
        value: Map x -> f(x)
        gradient: Map x -> grad f(x)
        dimension: Length d of x
        penalty_mask: Coordinates that carry the L1 penalty
        penalty_scale: Per-coordinate penalty multipliers (column standard
            deviations); penalizing lam * s_j |x_j| is the same as penalizing
            lam |x_j| on unit-variance columns
    """
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    dimension: int
    penalty_mask: np.ndarray
    penalty_scale: Optional[np.ndarray] = None

    def penalty_weights(self) -> np.ndarray:
        weights = np.asarray(self.penalty_mask, dtype=float)
        if self.penalty_scale is not None:
            weights = weights * np.asarray(self.penalty_scale, dtype=float)
        return weights


@dataclass
class SolverResult:
    """
    Outcome of a penalized minimization.

    Non-convergence is reported here rather than raised; callers decide.
    """
    coef: np.ndarray
    converged: bool
    iterations: int
    residual: float
    objective: float
    lam: float
    trace: List[float] = field(default_factory=list, repr=False)


def soft_threshold(z, t):
    """
    Proximal map of t|.|: sign(z) max(|z| - t, 0).

    Args:
        z: Scalar or array
        t: Nonnegative threshold (scalar or array)

    Returns:
        Thresholded value(s)
    """
    result = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    if np.ndim(result) == 0:
        return float(result)
    return result


def _thresholds(objective: SmoothObjective, lam: float) -> np.ndarray:
    weights = objective.penalty_weights()
    thresholds = np.zeros_like(weights, dtype=float)
    penalized = weights > 0
    thresholds[penalized] = lam * weights[penalized]
    return thresholds


def _penalty(thresholds: np.ndarray, x: np.ndarray) -> float:
    active = x != 0
    return float(np.sum(thresholds[active] * np.abs(x[active])))


def kkt_violation(grad: np.ndarray, x: np.ndarray, thresholds: np.ndarray) -> float:
    """
    Largest violation of the L1 stationarity conditions.

    Zero coordinates need |g_j| <= t_j; nonzero ones need g_j + t_j sign(x_j) = 0.
    """
    violation = np.maximum(np.abs(grad) - thresholds, 0.0)
    nonzero = x != 0
    violation[nonzero] = np.abs(grad[nonzero] + thresholds[nonzero] * np.sign(x[nonzero]))
    return float(np.max(violation)) if violation.size else 0.0


def kkt_residual(objective: SmoothObjective, x: np.ndarray, lam: float) -> float:
    """
    Independent stationarity check of a returned solution.

    Args:
        objective: The smooth part of the problem
        x: Candidate minimizer
        lam: Penalty level

    Returns:
        Max-norm KKT violation
    """
    x = np.asarray(x, dtype=float)
    return kkt_violation(objective.gradient(x), x, _thresholds(objective, lam))


def minimize_l1(
    objective: SmoothObjective,
    lam: float,
    init: Optional[np.ndarray] = None,
    settings: Optional[SolverSettings] = None,
) -> SolverResult:
    """
    Minimize f(x) + lam * sum_j s_j |x_j| over the penalized coordinates.

    Accelerated proximal gradient with backtracking. An iterate is only
    accepted when it does not increase the penalized objective; otherwise
    the momentum restarts from the current point.

    Args:
        objective: Smooth convex part
        lam: Penalty level (>= 0, may be inf to pin penalized coordinates at 0)
        init: Starting point (defaults to zero)
        settings: Solver settings

    Returns:
        SolverResult with the last iterate, convergence flag and KKT residual

    Raises:
        InvalidObjectiveError: Non-finite value or gradient at an accepted point
    """
    settings = settings or SolverSettings()
    if lam < 0:
        raise ValueError(f"penalty level must be nonnegative, got {lam}")

    d = objective.dimension
    thresholds = _thresholds(objective, lam)
    x = np.zeros(d) if init is None else np.array(init, dtype=float)
    if x.shape != (d,):
        raise ValueError(f"init must have length {d}")
    x = np.where(np.isinf(thresholds), 0.0, x)

    fx = objective.value(x)
    gx = objective.gradient(x)
    if not np.isfinite(fx) or not np.all(np.isfinite(gx)):
        raise InvalidObjectiveError("non-finite value or gradient at the initial point", iteration=0)
    Fx = fx + _penalty(thresholds, x)
    trace = [Fx]

    residual = kkt_violation(gx, x, thresholds)
    if residual <= settings.tolerance:
        return SolverResult(x, True, 0, residual, Fx, lam, trace)

    L = 1.0 / settings.initial_step
    y, fy, gy = x, fx, gx
    t = 1.0

    for iteration in range(1, settings.max_iterations + 1):
        while True:
            p = soft_threshold(y - gy / L, thresholds / L)
            fp = objective.value(p)
            step = p - y
            bound = fy + gy @ step + 0.5 * L * (step @ step)
            if np.isfinite(fp) and fp <= bound + 1e-12 * abs(fy):
                break
            L /= settings.shrink
            if L > _MAX_LIPSCHITZ:
                raise InvalidObjectiveError(
                    "line search failed to find a descent step", iteration=iteration
                )

        Fp = fp + _penalty(thresholds, p)
        if Fp <= Fx:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = p + ((t - 1.0) / t_next) * (p - x)
            t = t_next
            x, fx, Fx = p, fp, Fp
            gx = objective.gradient(x)
            if not np.all(np.isfinite(gx)):
                raise InvalidObjectiveError("non-finite gradient", iteration=iteration)
            trace.append(Fx)
            residual = kkt_violation(gx, x, thresholds)
            if residual <= settings.tolerance:
                logger.debug(f"minimize_l1 converged in {iteration} iterations (lam={lam:.3g})")
                return SolverResult(x, True, iteration, residual, Fx, lam, trace)
            fy = objective.value(y)
            gy = objective.gradient(y)
            if not (np.isfinite(fy) and np.all(np.isfinite(gy))):
                y, fy, gy, t = x, fx, gx, 1.0
            continue

        if y is x:
            # a plain proximal step from x failed to descend; tighten the step
            L /= settings.shrink
            if L > _MAX_LIPSCHITZ:
                break
            continue
        # restart the momentum from the last accepted point
        y, fy, gy, t = x, fx, gx, 1.0

    logger.warning(
        f"minimize_l1 stopped without converging (lam={lam:.3g}, residual={residual:.3g})"
    )
    return SolverResult(x, False, iteration, residual, Fx, lam, trace)


def lambda_max(objective: SmoothObjective, settings: Optional[SolverSettings] = None) -> Tuple[float, np.ndarray]:
    """
    Smallest penalty level zeroing every penalized coordinate.

    Args:
        objective: Smooth loss
        settings: Solver settings for the unpenalized null fit

    Returns:
        Tuple of (lambda_max, null-model solution)
    """
    null_fit = minimize_l1(objective, np.inf, settings=settings)
    weights = objective.penalty_weights()
    penalized = weights > 0
    if not np.any(penalized):
        return 0.0, null_fit.coef
    grad = objective.gradient(null_fit.coef)
    return float(np.max(np.abs(grad[penalized]) / weights[penalized])), null_fit.coef


def penalty_path(
    objective: SmoothObjective,
    n_lambdas: int = 50,
    ratio: float = 1e-3,
    n_folds: int = 5,
    settings: Optional[SolverSettings] = None,
) -> "PenaltyPath":
    """Geometric grid from lambda_max of the objective down to ratio * lambda_max."""
    lam_top, _ = lambda_max(objective, settings)
    logger.debug(f"lambda_max={lam_top:.4g}")
    return PenaltyPath.geometric(lam_top, n_lambdas, ratio, n_folds)


@dataclass
class PenaltyPath:
    """
    Decreasing grid of penalty levels for cross-validation.

    Attributes:
        lambdas: Strictly decreasing penalty levels
        n_folds: Fold count K
        fold_losses: K x len(lambdas) held-out losses, filled by CV
    """
    lambdas: np.ndarray
    n_folds: int = 5
    fold_losses: Optional[np.ndarray] = None

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if self.lambdas.ndim != 1 or self.lambdas.size == 0:
            raise ValueError("penalty grid must be a nonempty vector")
        if np.any(np.diff(self.lambdas) >= 0):
            raise ValueError("penalty grid must be strictly decreasing")
        if self.n_folds < 2:
            raise ValueError("cross-validation needs at least 2 folds")

    @classmethod
    def geometric(cls, lam_max: float, n_lambdas: int = 50, ratio: float = 1e-3, n_folds: int = 5) -> "PenaltyPath":
        """Geometric grid from lam_max down to ratio * lam_max."""
        if lam_max <= 0:
            return cls(np.array([0.0]), n_folds)
        return cls(np.geomspace(lam_max, ratio * lam_max, n_lambdas), n_folds)

    def mean_losses(self) -> np.ndarray:
        if self.fold_losses is None:
            raise ValueError("no cross-validation losses recorded")
        return self.fold_losses.mean(axis=0)


def assign_folds(
    n: int,
    n_folds: int,
    seed: int,
    strata: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Seeded fold labels for n rows.

    Args:
        n: Row count
        n_folds: Fold count K
        seed: Shuffle seed
        strata: Optional labels to stratify on (treatment indicators)

    Returns:
        Integer array of fold ids in 0..K-1

    Raises:
        DegenerateFoldError: Fewer rows than folds, so folds n..K-1 would be empty
    """
    if n < n_folds:
        raise DegenerateFoldError(n, f"{n_folds}-fold cross-validation needs at least {n_folds} rows, got {n}")
    folds = np.empty(n, dtype=int)
    placeholder = np.zeros(n)
    if strata is not None and np.min(np.bincount(np.asarray(strata, dtype=int))) >= n_folds:
        splitter = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed)
        splits = splitter.split(placeholder, np.asarray(strata, dtype=int))
    else:
        splits = KFold(n_splits=n_folds, shuffle=True, random_state=seed).split(placeholder)
    for fold, (_, test) in enumerate(splits):
        folds[test] = fold
    return folds


def select_lambda_cv(
    folds: np.ndarray,
    build_objective: Callable[[np.ndarray], SmoothObjective],
    path: PenaltyPath,
    treated: Optional[np.ndarray] = None,
    settings: Optional[SolverSettings] = None,
) -> float:
    """
    Pick the grid element with the lowest average held-out loss.

    Ties go to the larger penalty. The held-out loss is the smooth objective
    built on the held-out rows, evaluated at the training-fold solution.

    Args:
        folds: Fold id per row
        build_objective: Map from row indices to the objective on those rows
        path: Penalty grid; ``fold_losses`` is filled in place
        treated: Treatment indicators, when the objective needs treated rows
        settings: Solver settings

    Returns:
        Selected penalty level

    Raises:
        DegenerateFoldError: A fold is empty or lacks treated observations
    """
    folds = np.asarray(folds)
    losses = np.empty((path.n_folds, path.lambdas.size))

    for fold in range(path.n_folds):
        test = np.flatnonzero(folds == fold)
        train = np.flatnonzero(folds != fold)
        if test.size == 0 or train.size == 0:
            raise DegenerateFoldError(fold, "fold is empty")
        if treated is not None:
            if not np.any(treated[test] == 1) or not np.any(treated[train] == 1):
                raise DegenerateFoldError(fold, "no treated observations")

        train_objective = build_objective(train)
        test_objective = build_objective(test)
        coef = None
        for k, lam in enumerate(path.lambdas):
            # warm start from the previous grid point
            fit = minimize_l1(train_objective, lam, init=coef, settings=settings)
            coef = fit.coef
            losses[fold, k] = test_objective.value(coef)
        logger.debug(f"CV fold {fold + 1}/{path.n_folds} done")

    path.fold_losses = losses
    best = int(np.argmin(path.mean_losses()))
    selected = float(path.lambdas[best])
    logger.info(f"Selected lambda={selected:.4g} (grid index {best}/{path.lambdas.size - 1})")
    return selected


def theory_lambda(n: int, d: int, scale: float = 1.0) -> float:
    """Rate-prescribed penalty scale * sqrt(log(max(d, n)) / n)."""
    return float(scale * np.sqrt(np.log(max(d, n)) / n))


def column_scale(X: np.ndarray) -> np.ndarray:
    """Column standard deviations, with 1 for constant columns."""
    scale = np.std(X, axis=0)
    return np.where(scale > 0, scale, 1.0)


def fit_penalized(
    build_objective: Callable[[Optional[np.ndarray]], SmoothObjective],
    n: int,
    penalty: PenaltyConfig,
    settings: Optional[SolverSettings] = None,
    strata: Optional[np.ndarray] = None,
) -> Tuple[SolverResult, Optional[PenaltyPath]]:
    """
    Resolve the penalty level and solve the full-data problem.

    Args:
        build_objective: Map from row indices (None for all rows) to the objective
        n: Row count
        penalty: Penalty configuration
        settings: Solver settings
        strata: Treatment indicators; used for stratified folds and to detect
            degenerate folds

    Returns:
        Tuple of (full-data fit, CV path or None)
    """
    objective = build_objective(None)
    path = None

    if penalty.mode == "fixed":
        lam = float(penalty.lam)
    elif penalty.mode == "theory":
        lam = theory_lambda(n, objective.dimension, penalty.theory_scale)
    else:
        folds = assign_folds(n, penalty.n_folds, penalty.seed, strata)
        path = penalty_path(objective, penalty.n_lambdas, penalty.lambda_ratio, penalty.n_folds, settings)
        lam = select_lambda_cv(folds, build_objective, path, treated=strata, settings=settings)

    fit = minimize_l1(objective, lam, settings=settings)
    return fit, path
