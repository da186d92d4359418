"""Unit tests for CSV ingestion and JSON output."""

import json

import numpy as np
import pytest

from hd_cbps.core.exceptions import DataValidationError
from hd_cbps.core.model import Dataset
from hd_cbps.utils.io import ingest_csv, to_json, write_dataset_csv, write_frame_csv, write_json


@pytest.fixture
def write_csv(tmp_path):
    def write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return write


class TestIngestCsv:
    """Test dataset ingestion."""

    def test_basic(self, write_csv):
        """Test columns, intercept and values."""
        path = write_csv("a,T,Y,b\n0.5,1,2.25,-1\n1.5,0,3.0,2\n-0.25,1,4,0\n")

        data = ingest_csv(path)

        assert data.columns == ("intercept", "a", "b")
        np.testing.assert_array_equal(data.X, [[1, 0.5, -1], [1, 1.5, 2], [1, -0.25, 0]])
        np.testing.assert_array_equal(data.T, [1, 0, 1])
        np.testing.assert_array_equal(data.Y, [2.25, 3.0, 4.0])

    def test_invalid_treatment(self, write_csv):
        """Test a treatment value of 2 is reported with its row."""
        path = write_csv("T,Y,a\n1,1,0\n2,1,0\n0,1,0\n")

        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(path)

        assert exc_info.value.field == "T"
        assert exc_info.value.row == 2

    def test_non_numeric_cell(self, write_csv):
        """Test a non-numeric cell is located by row and column."""
        path = write_csv("T,Y,a\n1,1,0\n0,1,0\n1,1,abc\n")

        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(path)

        assert (exc_info.value.row, exc_info.value.column) == (3, "a")

    def test_missing_cell(self, write_csv):
        """Test an empty cell is located by row and column."""
        path = write_csv("T,Y,a\n1,1,0\n0,,0\n1,1,1\n")

        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(path)

        assert (exc_info.value.row, exc_info.value.column) == (2, "Y")

    def test_duplicate_header(self, write_csv):
        """Test duplicate column names are rejected."""
        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(write_csv("T,Y,a,a\n1,1,0,0\n0,1,0,0\n"))

        assert exc_info.value.field == "header"
        assert exc_info.value.column == "a"

    def test_missing_treatment_column(self, write_csv):
        """Test a file without T is rejected."""
        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(write_csv("Y,a\n1,0\n"))

        assert "'T'" in str(exc_info.value)

    def test_no_control_rows(self, write_csv):
        """Test data without control rows is rejected."""
        with pytest.raises(DataValidationError):
            ingest_csv(write_csv("T,Y,a\n1,1,0\n1,2,0\n"))

    def test_missing_file(self, tmp_path):
        """Test a missing input file."""
        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(tmp_path / "absent.csv")

        assert exc_info.value.field == "input"

    def test_input_unchanged(self, write_csv):
        """Test ingestion does not modify the file."""
        path = write_csv("T,Y,a\n1,1,0\n0,1,0\n")
        before = path.read_bytes()

        ingest_csv(path)

        assert path.read_bytes() == before

    def test_full_precision_round_trip(self, tmp_path):
        """Test a written dataset reads back bit for bit."""
        rng = np.random.default_rng(0)
        data = Dataset.from_arrays(rng.standard_normal((30, 4)) * 1e3, rng.binomial(1, 0.5, 30), rng.standard_normal(30) / 7)

        loaded = ingest_csv(write_dataset_csv(data, tmp_path / "out" / "data.csv"))

        np.testing.assert_array_equal(loaded.X, data.X)
        np.testing.assert_array_equal(loaded.T, data.T)
        np.testing.assert_array_equal(loaded.Y, data.Y)
        assert loaded.columns == data.columns

    def test_extra_field(self, write_csv):
        """Test a row with more fields than the header is located."""
        path = write_csv("T,Y,a\n1,1,0\n0,1,0,9\n1,2,0\n")

        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(path)

        assert exc_info.value.field == "row"
        assert (exc_info.value.row, exc_info.value.column) == (2, "field 4")

    def test_extra_field_in_first_row(self, write_csv):
        """Test an extra field in the first data row is not read as an index."""
        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(write_csv("T,Y,a\n1,1,0,7\n0,1,0\n"))

        assert exc_info.value.row == 1

    def test_short_row(self, write_csv):
        """Test a row with too few fields names the first absent column."""
        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(write_csv("T,Y,a\n1,1,0\n0,1\n"))

        assert (exc_info.value.row, exc_info.value.column) == (2, "a")

    def test_invalid_utf8(self, tmp_path):
        """Test an undecodable byte is reported with its row and column."""
        path = tmp_path / "data.csv"
        path.write_bytes(b"T,Y,a\n1,1,0\n0,\xfe,1\n")

        with pytest.raises(DataValidationError) as exc_info:
            ingest_csv(path)

        assert (exc_info.value.row, exc_info.value.column) == (2, "Y")
        assert "0xfe" in str(exc_info.value)

    def test_blank_lines_ignored(self, write_csv):
        """Test blank lines do not count as rows."""
        data = ingest_csv(write_csv("T,Y,a\n1,1,0\n\n0,1,0\n"))

        assert data.n == 2


class TestJson:
    """Test the JSON writer."""

    def test_layout(self):
        """Test float formatting, nesting and null handling."""
        document = {"a": 0.1, "b": [1, 2.5], "c": float("nan"), "d": None, "e": True, "f": {}}

        assert to_json(document) == (
            '{\n'
            '  "a": 0.10000000000000001,\n'
            '  "b": [\n'
            '    1,\n'
            '    2.5\n'
            '  ],\n'
            '  "c": null,\n'
            '  "d": null,\n'
            '  "e": true,\n'
            '  "f": {}\n'
            '}\n'
        )

    def test_numpy_values(self):
        """Test numpy scalars and arrays are serialized."""
        text = to_json({"x": np.float64(1.5), "y": np.arange(2), "z": np.bool_(False)})

        assert json.loads(text) == {"x": 1.5, "y": [0, 1], "z": False}

    def test_float_round_trip(self):
        """Test parsed floats equal the originals."""
        values = list(np.random.default_rng(1).standard_normal(20))

        assert json.loads(to_json(values)) == values

    def test_unsupported_type(self):
        """Test unknown objects are rejected."""
        with pytest.raises(TypeError):
            to_json({"x": object()})

    def test_writers(self, tmp_path):
        """Test file writers create parent directories."""
        import pandas as pd

        json_path = write_json({"a": 1}, tmp_path / "nested" / "doc.json")
        csv_path = write_frame_csv(pd.DataFrame({"v": [0.1]}), tmp_path / "nested" / "t.csv")

        assert json.loads(json_path.read_text()) == {"a": 1}
        assert csv_path.read_text().splitlines() == ["v", "0.10000000000000001"]
