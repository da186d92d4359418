"""Data-generating processes for the simulation study.

Covariates are AR(1)-correlated Gaussians. Treatment follows a sparse
logistic model and potential outcomes a sparse linear (or binomial-logistic)
model. Misspecified scenarios feed a Kang-Schafer style transform of the
covariates into the treatment and/or outcome model while the analyst still
observes the untransformed covariates.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from loguru import logger
from scipy.special import expit

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]

# 0-based column indices of X1..X10
_PS_COLUMNS = np.arange(6)
_PS_COEF = np.array([-1.0, 0.5, -0.25, -0.1, -0.1, 0.1])
_Y1_COLUMNS = np.arange(4, 8)
_Y0_COLUMNS = np.arange(4, 10)
_Y1_LINEAR = (2.0, 0.137)
_Y0_LINEAR = (1.0, 0.291)
_Y1_BINOMIAL = (0.0, 0.25)
_Y0_BINOMIAL = (-0.25, 0.25)

N_TRANSFORMED = 8
ORACLE_DRAWS = 10**7
ORACLE_CHUNK = 10**6
CONSTANTS_SEED = 20_190_101
TRUTH_SEED = 20_190_102


class OutcomeKind(str, Enum):
    """Outcome model of the simulation."""
    LINEAR = "linear"
    BINOMIAL = "binomial-logistic"


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based (Philox) generator from a seed, or pass a generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def replication_rng(master_seed: int, replication: int) -> np.random.Generator:
    """Independent stream for replication r, derived from (master_seed, r)."""
    return make_rng(np.random.SeedSequence([master_seed, replication]))


def gen_covariates(n: int, d: int, rho: float = 0.5, seed: SeedLike = None) -> np.ndarray:
    """
    Draw n rows of N(0, Sigma) with Sigma_jk = rho^|j-k|.

    Uses the recursion X_1 = Z_1, X_j = rho X_{j-1} + sqrt(1 - rho^2) Z_j.
    The intercept is not included; ``Dataset.from_arrays`` prepends it.

    Args:
        n: Row count
        d: Covariate count
        rho: Lag-one correlation
        seed: Seed or generator

    Returns:
        n x d covariate matrix
    """
    if d < 1:
        raise ValueError("need at least one covariate")
    rng = make_rng(seed)
    Z = rng.standard_normal((n, d))
    X = np.empty_like(Z)
    X[:, 0] = Z[:, 0]
    innovation = np.sqrt(1.0 - rho * rho)
    for j in range(1, d):
        X[:, j] = rho * X[:, j - 1] + innovation * Z[:, j]
    return X


def propensity_index(X_eff: np.ndarray) -> np.ndarray:
    """-X1 + X2/2 - X3/4 - X4/10 - X5/10 + X6/10."""
    return X_eff[:, _PS_COLUMNS] @ _PS_COEF


def gen_treatment(X_eff: np.ndarray, seed: SeedLike = None) -> np.ndarray:
    """
    Bernoulli treatment with pi = 1 - 1 / {1 + exp(index)}.

    Args:
        X_eff: Covariates driving treatment (at least 6 columns, no intercept)
        seed: Seed or generator

    Returns:
        0/1 float vector
    """
    if X_eff.shape[1] < 6:
        raise ValueError("treatment model needs at least 6 covariates")
    rng = make_rng(seed)
    return rng.binomial(1, expit(propensity_index(X_eff))).astype(float)


def raw_transforms(X: np.ndarray) -> np.ndarray:
    """The eight transformed coordinates before standardization."""
    x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    x6, x7, x9 = X[:, 5], X[:, 6], X[:, 8]
    return np.column_stack([
        np.exp(x1 / 2.0),
        x2 / (1.0 + np.exp(x1)) + 10.0,
        (x1 * x3 / 25.0 + 0.6) ** 3,
        (x2 + x4 + 20.0) ** 2,
        x6,
        np.exp(x6 + x7),
        x9**2,
        x7**3 - 20.0,
    ])


@dataclass(frozen=True)
class StandardizationConstants:
    """Monte Carlo means and standard deviations of the raw transforms."""
    mean: np.ndarray
    sd: np.ndarray
    draws: int


@lru_cache(maxsize=8)
def standardization_constants(
    rho: float = 0.5,
    draws: int = ORACLE_DRAWS,
    seed: int = CONSTANTS_SEED,
) -> StandardizationConstants:
    """
    Mean and standard deviation of each raw transform under the covariate law.

    Computed once per (rho, draws, seed) from a chunked Monte Carlo run.
    """
    rng = make_rng(seed)
    total = np.zeros(N_TRANSFORMED)
    total_sq = np.zeros(N_TRANSFORMED)
    done = 0
    while done < draws:
        size = min(ORACLE_CHUNK, draws - done)
        raw = raw_transforms(gen_covariates(size, 9, rho, rng))
        total += raw.sum(axis=0)
        total_sq += np.square(raw).sum(axis=0)
        done += size
    mean = total / draws
    sd = np.sqrt(np.maximum(total_sq / draws - mean**2, 0.0))
    logger.debug(f"Standardization constants from {draws} draws: mean={mean}, sd={sd}")
    return StandardizationConstants(mean=mean, sd=sd, draws=draws)


def transform_mis(
    X: np.ndarray,
    rho: float = 0.5,
    constants: Optional[StandardizationConstants] = None,
    standardize: bool = True,
) -> np.ndarray:
    """
    Replace coordinates 1-8 with standardized nonlinear transforms.

    Coordinates 9 onward pass through unchanged.

    Args:
        X: Covariates (at least 9 columns, no intercept)
        rho: Covariate correlation, selects the standardization constants
        constants: Precomputed constants (computed and cached when omitted)
        standardize: Return raw transforms when False

    Returns:
        Matrix of the same shape as X
    """
    if X.shape[1] < 9:
        raise ValueError("transform needs at least 9 covariates")
    raw = raw_transforms(X)
    if standardize:
        constants = constants or standardization_constants(rho)
        raw = (raw - constants.mean) / constants.sd
    out = X.copy()
    out[:, :N_TRANSFORMED] = raw
    return out


def _arm_indices(X_eff: np.ndarray, kind: OutcomeKind):
    kind = OutcomeKind(kind)
    (a1, b1), (a0, b0) = (
        (_Y1_LINEAR, _Y0_LINEAR) if kind is OutcomeKind.LINEAR else (_Y1_BINOMIAL, _Y0_BINOMIAL)
    )
    eta1 = a1 + b1 * X_eff[:, _Y1_COLUMNS].sum(axis=1)
    eta0 = a0 + b0 * X_eff[:, _Y0_COLUMNS].sum(axis=1)
    return eta1, eta0


@dataclass(frozen=True)
class Truth:
    """Population targets with their Monte Carlo standard errors (0 when exact)."""
    mu1: float
    mu0: float
    se_mu1: float = 0.0
    se_mu0: float = 0.0
    se_ate: float = 0.0

    @property
    def ate(self) -> float:
        return self.mu1 - self.mu0

    def as_dict(self):
        return {
            "mu1": self.mu1,
            "mu0": self.mu0,
            "ate": self.ate,
            "se_mu1": self.se_mu1,
            "se_mu0": self.se_mu0,
            "se_ate": self.se_ate,
        }


@lru_cache(maxsize=16)
def outcome_truth(
    kind: OutcomeKind = OutcomeKind.LINEAR,
    misspecified: bool = False,
    rho: float = 0.5,
    trials: int = 8,
    draws: int = ORACLE_DRAWS,
    seed: int = TRUTH_SEED,
) -> Truth:
    """
    E{Y(1)} and E{Y(0)} of the outcome model.

    The correctly specified linear model has the exact truth (2, 1) since
    the covariates have mean zero. Every other case is integrated by a
    chunked Monte Carlo oracle over the (transformed) covariate law.
    """
    kind = OutcomeKind(kind)
    if kind is OutcomeKind.LINEAR and not misspecified:
        return Truth(mu1=_Y1_LINEAR[0], mu0=_Y0_LINEAR[0])

    rng = make_rng(seed)
    constants = standardization_constants(rho, draws) if misspecified else None
    sums = np.zeros(3)
    sums_sq = np.zeros(3)
    done = 0
    while done < draws:
        size = min(ORACLE_CHUNK, draws - done)
        X = gen_covariates(size, 10, rho, rng)
        if misspecified:
            X = transform_mis(X, rho, constants)
        eta1, eta0 = _arm_indices(X, kind)
        if kind is OutcomeKind.BINOMIAL:
            m1, m0 = trials * expit(eta1), trials * expit(eta0)
        else:
            m1, m0 = eta1, eta0
        values = np.column_stack([m1, m0, m1 - m0])
        sums += values.sum(axis=0)
        sums_sq += np.square(values).sum(axis=0)
        done += size

    mean = sums / draws
    se = np.sqrt(np.maximum(sums_sq / draws - mean**2, 0.0) / draws)
    logger.info(f"Outcome truth ({kind.value}, misspecified={misspecified}): mu1={mean[0]:.6f}, mu0={mean[1]:.6f}")
    return Truth(mu1=float(mean[0]), mu0=float(mean[1]), se_mu1=float(se[0]), se_mu0=float(se[1]), se_ate=float(se[2]))


@dataclass
class OutcomeDraw:
    """Observed outcomes, potential outcomes and the population truth."""
    Y: np.ndarray
    Y1: np.ndarray
    Y0: np.ndarray
    truth: Truth


def gen_outcomes(
    X_eff: np.ndarray,
    T: np.ndarray,
    kind: OutcomeKind = OutcomeKind.LINEAR,
    seed: SeedLike = None,
    trials: int = 8,
    misspecified: bool = False,
    rho: float = 0.5,
    truth: Optional[Truth] = None,
) -> OutcomeDraw:
    """
    Draw potential outcomes and reveal Y = Y(1) T + Y(0) (1 - T).

    Linear: Y(1) = 2 + 0.137 (X5 + ... + X8) + e1, Y(0) = 1 + 0.291 (X5 + ... + X10) + e0.
    Binomial: Y(t) ~ Binomial(trials, expit(eta_t)).

    Args:
        X_eff: Covariates driving the outcomes (at least 10 columns)
        T: Treatment indicators
        kind: Outcome model
        seed: Seed or generator
        trials: Binomial trial count
        misspecified: Whether X_eff is the transformed design (selects the truth)
        rho: Covariate correlation (for the truth oracle)
        truth: Precomputed truth

    Returns:
        OutcomeDraw
    """
    if X_eff.shape[1] < 10:
        raise ValueError("outcome model needs at least 10 covariates")
    rng = make_rng(seed)
    kind = OutcomeKind(kind)
    eta1, eta0 = _arm_indices(X_eff, kind)
    n = X_eff.shape[0]
    if kind is OutcomeKind.LINEAR:
        Y1 = eta1 + rng.standard_normal(n)
        Y0 = eta0 + rng.standard_normal(n)
    else:
        Y1 = rng.binomial(trials, expit(eta1)).astype(float)
        Y0 = rng.binomial(trials, expit(eta0)).astype(float)
    if truth is None:
        truth = outcome_truth(kind, misspecified, rho, trials)
    return OutcomeDraw(Y=Y1 * T + Y0 * (1.0 - T), Y1=Y1, Y0=Y0, truth=truth)
