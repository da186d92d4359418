"""Link functions, weight functions and exponential families.

Shared building blocks for the propensity, outcome and balancing fits:

- ``LogisticLink`` with the overflow policy for linear indices
- ``PropensityWeight`` / ``OutcomeWeight`` selectors (w1 / w2)
- ``ExponentialFamily`` cumulants for gaussian, binomial(m) and poisson
- ``Dataset``, the validated (X, T, Y) triple with an intercept column
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from hd_cbps.core.exceptions import (
    DataValidationError,
    InvalidOutcomeError,
    UnsupportedLinkError,
)

# pi(+-30) is within 1e-13 of {0, 1}
INDEX_CLAMP = 30.0


class LinkName(str, Enum):
    """Supported propensity links."""
    LOGISTIC = "logistic"


class LogisticLink:
    """Logistic propensity link pi(u) = 1 / (1 + exp(-u))."""

    name = LinkName.LOGISTIC

    @staticmethod
    def clamp(u):
        return np.clip(u, -INDEX_CLAMP, INDEX_CLAMP)

    def pi(self, u):
        """Probability pi(u), with u clamped to [-30, 30]."""
        return expit(self.clamp(u))

    def pi_prime(self, u):
        """Derivative pi'(u) = pi(u) (1 - pi(u))."""
        p = self.pi(u)
        return p * (1.0 - p)

    def ps_ratio(self, u):
        """pi'(u) / pi(u)^2, which equals exp(-u) for the logistic link."""
        return np.exp(-self.clamp(u))


def get_link(name: str = "logistic") -> LogisticLink:
    """
    Resolve a link by name.

    Args:
        name: Link identifier

    Returns:
        Link instance

    Raises:
        UnsupportedLinkError: For anything but 'logistic'
    """
    if str(getattr(name, "value", name)).lower() != LinkName.LOGISTIC.value:
        raise UnsupportedLinkError(str(name))
    return LogisticLink()


class W1(str, Enum):
    """Propensity weight selectors."""
    PI = "pi"
    ONE = "one"
    BPP = "bpp"


class W2(str, Enum):
    """Outcome weight selectors."""
    ONE = "one"
    INV_PI = "inv-pi"
    PS_ADJUSTED = "ps-adjusted"


@dataclass(frozen=True)
class PropensityWeight:
    """
    Weight function w1 of the quasi-likelihood.

    Attributes:
        selector: Which weight function to use
        constants: Per-observation constants b''(alpha_hat' X_i), required
            for the ``bpp`` selector of the GLM pipeline
    """
    selector: W1 = W1.ONE
    constants: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "selector", W1(self.selector))
        if self.selector is W1.BPP:
            if self.constants is None:
                raise DataValidationError("w1", "selector 'bpp' requires per-observation constants")
            constants = np.asarray(self.constants, dtype=float)
            if not np.all(np.isfinite(constants)) or np.any(constants <= 0):
                raise DataValidationError("w1", "bpp constants must be finite and strictly positive")
            object.__setattr__(self, "constants", constants)

    def evaluate(self, u, link: LogisticLink, rows: Optional[np.ndarray] = None):
        """
        Evaluate w1 at linear indices u.

        Args:
            u: Linear indices beta' X_i
            link: Propensity link
            rows: Row subset the indices belong to (bpp constants are per row)

        Returns:
            Array of weights, same shape as u
        """
        u = np.asarray(u, dtype=float)
        if self.selector is W1.PI:
            return link.pi(u)
        if self.selector is W1.ONE:
            return np.ones_like(u)
        constants = self.constants if rows is None else self.constants[rows]
        return np.broadcast_to(constants, u.shape).astype(float)

    def subset(self, rows: np.ndarray) -> "PropensityWeight":
        """Restrict per-observation constants to a row subset."""
        if self.selector is not W1.BPP:
            return self
        return PropensityWeight(self.selector, self.constants[rows])


@dataclass(frozen=True)
class OutcomeWeight:
    """Weight function w2 of the weighted outcome loss."""
    selector: W2 = W2.PS_ADJUSTED

    def __post_init__(self):
        object.__setattr__(self, "selector", W2(self.selector))

    def evaluate(self, u, link: LogisticLink):
        u = np.asarray(u, dtype=float)
        if self.selector is W2.ONE:
            return np.ones_like(u)
        if self.selector is W2.INV_PI:
            return 1.0 / link.pi(u)
        return link.ps_ratio(u)


class FamilyName(str, Enum):
    """Supported outcome families."""
    GAUSSIAN = "gaussian"
    BINOMIAL = "binomial"
    POISSON = "poisson"


class ExponentialFamily(ABC):
    """
    Exponential family with canonical link.

    The density is exp[{y u - b(u)} / a(phi) + c(y, phi)], so the conditional
    mean is b'(u) and the variance a(phi) b''(u).
    """

    name: FamilyName
    dispersion: float = 1.0

    @abstractmethod
    def b(self, u):
        pass

    @abstractmethod
    def b_prime(self, u):
        pass

    @abstractmethod
    def b_double_prime(self, u):
        pass

    @abstractmethod
    def validate_response(self, y: np.ndarray) -> None:
        """Raise InvalidOutcomeError when y is outside the family's support."""
        pass

    @abstractmethod
    def sample(self, u, rng: np.random.Generator):
        pass

    @property
    def label(self) -> str:
        return self.name.value

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label})"


class Gaussian(ExponentialFamily):
    name = FamilyName.GAUSSIAN

    def b(self, u):
        return 0.5 * np.square(u)

    def b_prime(self, u):
        return np.asarray(u, dtype=float)

    def b_double_prime(self, u):
        return np.ones_like(np.asarray(u, dtype=float))

    def validate_response(self, y):
        if not np.all(np.isfinite(y)):
            raise InvalidOutcomeError(self.label, "outcomes must be finite")

    def sample(self, u, rng):
        return rng.normal(u, np.sqrt(self.dispersion))


class Binomial(ExponentialFamily):
    """Binomial family with m trials, canonical logit link."""

    name = FamilyName.BINOMIAL

    def __init__(self, trials: int = 1):
        if int(trials) != trials or trials < 1:
            raise InvalidOutcomeError("binomial", f"trial count must be a positive integer, got {trials}")
        self.trials = int(trials)

    @property
    def label(self) -> str:
        return f"binomial:{self.trials}"

    def b(self, u):
        return self.trials * np.logaddexp(0.0, u)

    def b_prime(self, u):
        return self.trials * expit(u)

    def b_double_prime(self, u):
        p = expit(u)
        return self.trials * p * (1.0 - p)

    def validate_response(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)) or np.any(y != np.round(y)):
            raise InvalidOutcomeError(self.label, "outcomes must be integer counts")
        if np.any(y < 0) or np.any(y > self.trials):
            raise InvalidOutcomeError(self.label, f"outcomes must lie in 0..{self.trials}")

    def sample(self, u, rng):
        return rng.binomial(self.trials, expit(u)).astype(float)


class Poisson(ExponentialFamily):
    name = FamilyName.POISSON

    def b(self, u):
        return np.exp(u)

    def b_prime(self, u):
        return np.exp(u)

    def b_double_prime(self, u):
        return np.exp(u)

    def validate_response(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)) or np.any(y != np.round(y)) or np.any(y < 0):
            raise InvalidOutcomeError(self.label, "outcomes must be nonnegative integers")

    def sample(self, u, rng):
        return rng.poisson(np.exp(u)).astype(float)


def get_family(spec: str) -> ExponentialFamily:
    """
    Parse a family specification.

    Args:
        spec: 'gaussian', 'poisson', 'binomial' or 'binomial:<m>'

    Returns:
        Family instance
    """
    name, _, arg = str(spec).strip().lower().partition(":")
    if name == FamilyName.GAUSSIAN.value and not arg:
        return Gaussian()
    if name == FamilyName.POISSON.value and not arg:
        return Poisson()
    if name == FamilyName.BINOMIAL.value:
        try:
            trials = int(arg) if arg else 1
        except ValueError:
            raise InvalidOutcomeError("binomial", f"cannot parse trial count '{arg}'")
        return Binomial(trials)
    raise InvalidOutcomeError(str(spec), "unknown family")


@dataclass(frozen=True)
class Dataset:
    """
    Observed (X, T, Y) data.

    Attributes:
        X: n x d design, column 0 is the intercept
        T: Binary treatment indicators
        Y: Outcomes
        columns: Column names of X (first is 'intercept')
    """
    X: np.ndarray
    T: np.ndarray
    Y: np.ndarray
    columns: Tuple[str, ...] = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        T = np.array(self.T, dtype=float)
        Y = np.array(self.Y, dtype=float)

        if X.ndim != 2 or X.shape[1] < 1:
            raise DataValidationError("X", "design must be a 2-d matrix with an intercept column")
        n, d = X.shape
        if T.shape != (n,) or Y.shape != (n,):
            raise DataValidationError("T/Y", f"expected vectors of length {n}")
        if not np.all(np.isfinite(X)):
            raise DataValidationError("X", "all entries must be finite")
        if not np.all(X[:, 0] == 1.0):
            raise DataValidationError("X", "column 0 must be the all-ones intercept")
        if not np.all(np.isin(T, (0.0, 1.0))):
            raise DataValidationError("T", "treatment must be 0/1")
        if not np.all(np.isfinite(Y)):
            raise DataValidationError("Y", "all outcomes must be finite")
        if T.sum() == 0 or T.sum() == n:
            raise DataValidationError("T", "need at least one treated and one control row")

        columns = tuple(self.columns) or ("intercept",) + tuple(f"X{j}" for j in range(1, d))
        if len(columns) != d:
            raise DataValidationError("columns", f"expected {d} names, got {len(columns)}")

        for name, value in (("X", X), ("T", T), ("Y", Y)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "columns", columns)

    @classmethod
    def from_arrays(
        cls,
        covariates: np.ndarray,
        T: np.ndarray,
        Y: np.ndarray,
        names: Optional[Sequence[str]] = None,
    ) -> "Dataset":
        """
        Build a dataset by prepending the intercept column.

        Args:
            covariates: n x p covariate matrix (no intercept)
            T: Treatment indicators
            Y: Outcomes
            names: Covariate names (defaults to X1..Xp)

        Returns:
            Validated dataset with d = p + 1 columns
        """
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        n, p = covariates.shape
        X = np.hstack([np.ones((n, 1)), covariates])
        names = list(names) if names is not None else [f"X{j}" for j in range(1, p + 1)]
        return cls(X=X, T=T, Y=Y, columns=("intercept", *names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def treated_count(self) -> int:
        return int(self.T.sum())

    def flip(self) -> "Dataset":
        """Swap treated and control labels (T -> 1 - T)."""
        return Dataset(X=self.X, T=1.0 - self.T, Y=self.Y, columns=self.columns)

    def with_outcome(self, Y: np.ndarray) -> "Dataset":
        return Dataset(X=self.X, T=self.T, Y=Y, columns=self.columns)


def quasi_integrand(
    u: float,
    t: float,
    link: LogisticLink,
    w1: PropensityWeight,
    c: Optional[float] = None,
) -> float:
    """
    Integrand {t / pi(u) - 1} w1(u) of the generalized quasi-likelihood.

    Args:
        u: Linear index
        t: Treatment indicator
        link: Propensity link
        w1: Weight selector
        c: Per-observation constant for the ``bpp`` selector

    Returns:
        Integrand value
    """
    p = link.pi(u)
    if w1.selector is W1.PI:
        weight = p
    elif w1.selector is W1.ONE:
        weight = 1.0
    else:
        weight = float(c) if c is not None else float(np.asarray(w1.constants).ravel()[0])
    return float((t / p - 1.0) * weight)


def check_logistic(link) -> None:
    name = getattr(link, "name", link)
    if str(getattr(name, "value", name)) != LinkName.LOGISTIC.value:
        raise UnsupportedLinkError(str(name))


def quasi_likelihood_terms(
    m: np.ndarray,
    T: np.ndarray,
    w1: PropensityWeight,
    rows: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Per-observation closed forms of the integral from 0 to m_i.

    Args:
        m: Linear indices (clamped to [-30, 30])
        T: Treatment indicators
        w1: Weight selector
        rows: Row subset for bpp constants

    Returns:
        Array of integrals, one per observation
    """
    m = np.clip(m, -INDEX_CLAMP, INDEX_CLAMP)
    if w1.selector is W1.PI:
        return T * m - np.logaddexp(0.0, m) + np.log(2.0)
    terms = (T - 1.0) * m - T * np.exp(-m) + T
    if w1.selector is W1.BPP:
        constants = w1.constants if rows is None else w1.constants[rows]
        terms = constants * terms
    return terms


def closed_form_Q(
    beta: np.ndarray,
    data: Dataset,
    w1: PropensityWeight,
    link: LogisticLink,
) -> float:
    """
    Generalized quasi-likelihood Q_n(beta) in closed form.

    Args:
        beta: Coefficient vector of length d
        data: Dataset
        w1: Weight selector
        link: Propensity link (must be logistic)

    Returns:
        Q_n(beta)
    """
    check_logistic(link)
    m = data.X @ np.asarray(beta, dtype=float)
    return float(np.mean(quasi_likelihood_terms(m, data.T, w1)))


class Pipeline(str, Enum):
    """Outcome-model pipeline: weighted least squares or exponential-family GLM."""
    LINEAR = "linear"
    GLM = "glm"
