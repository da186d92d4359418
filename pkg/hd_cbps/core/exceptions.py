"""Custom exceptions for the hd-cbps estimator."""

from typing import Any, Dict, Optional


class HDCBPSException(Exception):
    """Base exception for hd-cbps."""

    def to_dict(self) -> Dict[str, Any]:
        """
        Render the exception as a structured error document.

        Returns:
            Dictionary with the exception type, message and attributes
        """
        details = {
            key: value
            for key, value in vars(self).items()
            if not key.startswith("_")
        }
        return {
            "error": {
                "type": type(self).__name__,
                "message": str(self),
                **details,
            }
        }


class DataValidationError(HDCBPSException):
    """
    Exception raised when input data violates the dataset contract.

    Covers CSV parse failures (with row/column location), schema problems
    such as duplicate column names, and degenerate designs such as data
    without treated or control rows.
    """

    def __init__(
        self,
        field: str,
        message: str,
        row: Optional[int] = None,
        column: Optional[str] = None,
    ):
        """
        Initialize data validation error.

        Args:
            field: Dataset component that failed (e.g. 'X', 'T', 'header')
            message: Error message
            row: 1-based data row, when the failure has a location
            column: Column name, when the failure has a location
        """
        self.field = field
        self.row = row
        self.column = column
        location = ""
        if row is not None:
            location += f" at row {row}"
        if column is not None:
            location += f" in column '{column}'"
        super().__init__(f"Invalid {field}{location}: {message}")


class InvalidObjectiveError(HDCBPSException):
    """Exception raised when an objective or its gradient is not finite."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        self.iteration = iteration
        super().__init__(f"Invalid objective: {message}")


class DegenerateFoldError(HDCBPSException):
    """
    Exception raised when a cross-validation fold cannot be fitted.

    Typically the fold holds no treated observations while the objective
    is defined on the treatment group.
    """

    def __init__(self, fold: int, message: str):
        """
        Initialize degenerate fold error.

        Args:
            fold: Index of the offending fold
            message: Error message
        """
        self.fold = fold
        super().__init__(f"Fold {fold} is degenerate: {message}")


class UnsupportedLinkError(HDCBPSException):
    """Exception raised when a closed form is requested for a non-logistic link."""

    def __init__(self, link: str):
        self.link = link
        super().__init__(f"Link '{link}' is not supported; only 'logistic' ships")


class InvalidOutcomeError(HDCBPSException):
    """Exception raised when outcomes are incompatible with the outcome family."""

    def __init__(self, family: str, message: str):
        self.family = family
        super().__init__(f"Outcome incompatible with family '{family}': {message}")


class OverSaturatedSupportError(HDCBPSException):
    """Exception raised when the balancing system has more equations than treated rows."""

    def __init__(self, support_size: int, treated_count: int):
        self.support_size = support_size
        self.treated_count = treated_count
        super().__init__(
            f"Support of size {support_size} exceeds treated count {treated_count}; "
            "balancing equations are unsolvable"
        )


class InvalidLevelError(HDCBPSException):
    """Exception raised when a confidence level parameter lies outside (0, 1)."""

    def __init__(self, level: float):
        self.level = level
        super().__init__(f"Level parameter must lie in (0, 1), got {level}")


class ConfigurationError(HDCBPSException):
    """
    Exception raised for conflicting or invalid configuration.

    Reported by the CLI before any computation starts.
    """

    def __init__(self, option: str, message: str):
        """
        Initialize configuration error.

        Args:
            option: Offending option name
            message: Error message
        """
        self.option = option
        super().__init__(f"Configuration error for '{option}': {message}")


class SimulationAbortedError(HDCBPSException):
    """Exception raised when too many replications of a scenario fail."""

    def __init__(self, failures: Dict[int, str], replications: int):
        """
        Initialize simulation abort error.

        Args:
            failures: Mapping of replication index to failure message
            replications: Number of requested replications
        """
        self.failures = failures
        self.replications = replications
        super().__init__(
            f"{len(failures)} of {replications} replications failed; "
            "failure share exceeds the tolerated 2%"
        )
