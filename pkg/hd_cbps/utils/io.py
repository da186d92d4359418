"""Dataset CSV ingestion and machine-readable output writers."""

import csv
import io
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, List, Union

import numpy as np
import pandas as pd
from loguru import logger

from hd_cbps.core.exceptions import DataValidationError
from hd_cbps.core.model import Dataset

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.17g"
TREATMENT_COLUMN = "T"
OUTCOME_COLUMN = "Y"


def _decode(path: Path) -> str:
    """File contents as text; undecodable bytes are located by row and column."""
    raw = path.read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        before = raw[:exc.start]
        row = before.count(b"\n")
        field_index = before[before.rfind(b"\n") + 1:].count(b",")
        message = f"invalid UTF-8 byte 0x{raw[exc.start]:02x} at offset {exc.start}"
        if row == 0:
            raise DataValidationError("header", message, column=f"field {field_index + 1}")
        header = next(csv.reader(io.StringIO(raw.split(b"\n", 1)[0].decode("utf-8", errors="replace"))), [])
        column = header[field_index].strip() if field_index < len(header) else f"field {field_index + 1}"
        raise DataValidationError("cell", message, row=row, column=column)


def _read_header(text: str) -> List[str]:
    try:
        header = next(csv.reader(io.StringIO(text)), None)
    except csv.Error as exc:
        raise DataValidationError("header", str(exc))
    if not header:
        raise DataValidationError("header", "file is empty or has no header row")
    return [name.strip() for name in header]


def _check_widths(text: str, header: List[str]) -> None:
    """Every nonblank data row must have one field per header column."""
    rows = (row for row in csv.reader(io.StringIO(text)) if row)
    next(rows, None)
    try:
        for index, row in enumerate(rows, start=1):
            if len(row) != len(header):
                column = header[len(row)] if len(row) < len(header) else f"field {len(header) + 1}"
                raise DataValidationError(
                    "row", f"expected {len(header)} fields, saw {len(row)}", row=index, column=column
                )
    except csv.Error as exc:
        raise DataValidationError("input", str(exc))


def _read_frame(text: str) -> pd.DataFrame:
    try:
        return pd.read_csv(io.StringIO(text), float_precision="round_trip", skipinitialspace=True)
    except (pd.errors.ParserError, csv.Error) as exc:
        raise DataValidationError("input", str(exc))


def _first_bad_row(column: pd.Series) -> int:
    parsed = pd.to_numeric(column, errors="coerce")
    bad = np.flatnonzero(parsed.isna().to_numpy())
    return int(bad[0]) + 1


def ingest_csv(path: PathLike) -> Dataset:
    """
    Read a dataset from CSV.

    The file needs a header row with a column named T (values 0/1) and a
    column named Y; every other column is a numeric covariate, kept in file
    order after the prepended intercept.

    Args:
        path: CSV file

    Returns:
        Dataset

    Raises:
        DataValidationError: Missing file or columns, duplicate column names,
            missing or non-numeric cells, ragged rows and undecodable bytes
            (with row and column), treatment values outside {0, 1}, or data
            without treated or control rows
    """
    path = Path(path)
    if not path.is_file():
        raise DataValidationError("input", f"file not found: {path}")

    text = _decode(path)
    header = _read_header(text)
    seen = set()
    for name in header:
        if name in seen:
            raise DataValidationError("header", "duplicate column name", column=name)
        seen.add(name)
    for required in (TREATMENT_COLUMN, OUTCOME_COLUMN):
        if required not in seen:
            raise DataValidationError("header", f"required column '{required}' is missing")
    _check_widths(text, header)

    frame = _read_frame(text)
    frame.columns = header

    for name in header:
        column = frame[name]
        if column.isna().any():
            row = int(np.flatnonzero(column.isna().to_numpy())[0]) + 1
            raise DataValidationError("cell", "missing value", row=row, column=name)
        if not pd.api.types.is_numeric_dtype(column):
            raise DataValidationError("cell", "non-numeric value", row=_first_bad_row(column), column=name)

    T = frame[TREATMENT_COLUMN].to_numpy(dtype=float)
    invalid = np.flatnonzero(~np.isin(T, (0.0, 1.0)))
    if invalid.size:
        row = int(invalid[0]) + 1
        raise DataValidationError("T", f"treatment must be 0 or 1, got {T[invalid[0]]:g}", row=row, column="T")

    names = [name for name in header if name not in (TREATMENT_COLUMN, OUTCOME_COLUMN)]
    covariates = frame[names].to_numpy(dtype=float) if names else np.empty((len(frame), 0))
    data = Dataset.from_arrays(covariates, T, frame[OUTCOME_COLUMN].to_numpy(dtype=float), names)
    logger.info(f"Loaded {path}: n={data.n}, d={data.d}, treated={data.treated_count}")
    return data


def write_dataset_csv(data: Dataset, path: PathLike) -> Path:
    """
    Write a dataset as CSV (T, Y, then the covariates) at full precision.

    Args:
        data: Dataset
        path: Destination file

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(data.X[:, 1:], columns=list(data.columns[1:]))
    frame.insert(0, OUTCOME_COLUMN, data.Y)
    frame.insert(0, TREATMENT_COLUMN, data.T)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Wrote dataset to {path}")
    return path


def _encode(value: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(value, Enum):
        value = value.value
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, np.generic):
        value = value.item()

    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g") if math.isfinite(value) else "null"
    if isinstance(value, str):
        return json_string(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json_string(str(key))}: {_encode(item, indent, level + 1)}" for key, item in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [f"{pad}{_encode(item, indent, level + 1)}" for item in value]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def json_string(text: str) -> str:
    return json.dumps(text)


def to_json(document: Any, indent: int = 2) -> str:
    """
    Serialize a document with every float written to 17 significant digits.

    Key order is preserved, so equal documents give byte-identical text.
    Non-finite floats become null.
    """
    return _encode(document, indent, 0) + "\n"


def write_json(document: Any, path: PathLike) -> Path:
    """Write ``to_json(document)`` to a file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(document))
    logger.debug(f"Wrote JSON document to {path}")
    return path


def write_frame_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write a report table at full float precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path
