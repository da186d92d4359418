"""Unit tests for custom exceptions."""

import json

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
from hd_cbps.utils.io import to_json


class TestDataValidationError:
    """Test DataValidationError functionality."""

    def test_location(self):
        """Test row and column appear in the message."""
        exc = DataValidationError("cell", "non-numeric value", row=3, column="X2")

        assert exc.field == "cell"
        assert exc.row == 3
        assert "row 3" in str(exc)
        assert "'X2'" in str(exc)

    def test_without_location(self):
        """Test the message without a location."""
        exc = DataValidationError("T", "need both arms")

        assert exc.row is None
        assert str(exc) == "Invalid T: need both arms"

    def test_inheritance(self):
        """Test exception inheritance."""
        exc = DataValidationError("X", "bad")

        assert isinstance(exc, HDCBPSException)
        assert isinstance(exc, Exception)


class TestErrorDocument:
    """Test structured error documents."""

    def test_to_dict(self):
        """Test the document carries type, message and attributes."""
        document = ConfigurationError("family", "outcomes must be integer counts").to_dict()

        assert document["error"]["type"] == "ConfigurationError"
        assert document["error"]["option"] == "family"
        assert "integer counts" in document["error"]["message"]

    def test_serializable(self):
        """Test every exception renders as JSON."""
        errors = [
            InvalidObjectiveError("gradient is not finite", iteration=4),
            DegenerateFoldError(2, "no treated rows"),
            UnsupportedLinkError("probit"),
            InvalidOutcomeError("poisson", "negative count"),
            OverSaturatedSupportError(12, 10),
            InvalidLevelError(1.5),
            SimulationAbortedError({3: "failed", 9: "failed"}, 50),
        ]

        for exc in errors:
            document = json.loads(to_json(exc.to_dict()))
            assert document["error"]["type"] == type(exc).__name__


class TestSpecificErrors:
    """Test attributes of the remaining exceptions."""

    def test_degenerate_fold(self):
        """Test the fold index is kept."""
        exc = DegenerateFoldError(1, "no treated rows")

        assert exc.fold == 1
        assert "Fold 1" in str(exc)

    def test_oversaturated(self):
        """Test sizes are kept."""
        exc = OverSaturatedSupportError(12, 10)

        assert (exc.support_size, exc.treated_count) == (12, 10)

    def test_simulation_aborted(self):
        """Test the failure map is kept."""
        exc = SimulationAbortedError({3: "boom"}, 10)

        assert exc.failures == {3: "boom"}
        assert "1 of 10" in str(exc)

    def test_unsupported_link(self):
        """Test the link name is kept."""
        assert UnsupportedLinkError("probit").link == "probit"
