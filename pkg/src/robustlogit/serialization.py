from __future__ import annotations

import csv
import io
import json
import logging
from typing import Any, Dict, Mapping, Optional, Sequence, TextIO, Union

import numpy as np
import pandas as pd

from robustlogit.definitions import Coefficients, Dataset
from robustlogit.errors import DataError, DimensionMismatchError
from robustlogit.protocols import TableWriter

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
INTERCEPT_NAME = "(Intercept)"


def infer_separator(name: str) -> str:
    return "\t" if name.lower().endswith((".tsv", ".tab", ".txt")) else ","


def _read_text(source: Union[str, TextIO]) -> str:
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            return handle.read()
    return source.read()


def _check_layout(text: str, sep: str) -> None:
    rows = csv.reader(io.StringIO(text), delimiter=sep)
    try:
        header = next(rows)
    except StopIteration:
        raise DataError("Empty table") from None
    seen = set()
    for name in header[1:]:
        if name in seen:
            raise DataError("Duplicate column header", column=name)
        seen.add(name)
    for line, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(
                f"Ragged row: {len(row)} fields, header has {len(header)}", row=f"line {line}"
            )


def load_dataset(
    source: Union[str, TextIO],
    response: Optional[str] = None,
    allow_missing: bool = False,
    sep: Optional[str] = None,
) -> Dataset:
    """
    Read a CSV/TSV table: header row of column names, first column the row ids, decimal values,
    empty fields missing.

    :param response: name of the 0/1 response column; it is removed from the predictors.
    """
    if sep is None:
        name = source if isinstance(source, str) else getattr(source, "name", "")
        sep = infer_separator(str(name))
    text = _read_text(source)
    _check_layout(text, sep)
    frame = pd.read_csv(
        io.StringIO(text), sep=sep, dtype=str, keep_default_na=False, index_col=0
    )
    row_ids = tuple(str(r) for r in frame.index)

    columns: Dict[str, np.ndarray] = {}
    for name in frame.columns:
        raw = frame[name].str.strip()
        parsed = pd.to_numeric(raw.replace("", np.nan), errors="coerce")
        bad = parsed.isna() & (raw != "")
        if bad.any():
            position = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(
                f"Non-numeric value {raw.iloc[position]!r}", row=row_ids[position], column=str(name)
            )
        columns[str(name)] = parsed.to_numpy(dtype=float)

    y = None
    if response is not None:
        if response not in columns:
            raise DataError("Unknown response column", column=response)
        y = columns.pop(response)
        if np.isnan(y).any():
            raise DataError("Missing response", row=row_ids[int(np.flatnonzero(np.isnan(y))[0])], column=response)
    names = tuple(columns)
    values = np.column_stack([columns[c] for c in names]) if names else np.zeros((len(row_ids), 0))
    data = Dataset(values, names, row_ids, y, allow_missing)
    logger.info("Loaded %d x %d table with %d missing cells", data.n, data.p, data.n_missing)
    return data


class CsvTableWriter(TableWriter[pd.DataFrame]):
    """
    CSV with a fixed float format and `\\n` line endings, so equal tables give equal bytes.
    """

    def __init__(self, float_format: str = FLOAT_FORMAT, sep: str = ","):
        self.float_format = float_format
        self.sep = sep

    def dumps(self, table: pd.DataFrame) -> str:
        return str(
            table.to_csv(
                index=False, sep=self.sep, float_format=self.float_format, lineterminator="\n"
            )
        )

    def write(self, stream: TextIO, table: pd.DataFrame) -> int:
        return stream.write(self.dumps(table))


class JsonWriter(TableWriter[Mapping[str, Any]]):
    def dumps(self, table: Mapping[str, Any]) -> str:
        return json.dumps(table, indent=2, sort_keys=True) + "\n"

    def write(self, stream: TextIO, table: Mapping[str, Any]) -> int:
        return stream.write(self.dumps(table))


csv_writer = CsvTableWriter()
json_writer = JsonWriter()


def dataset_frame(data: Dataset, response_name: str = "y") -> pd.DataFrame:
    frame = pd.DataFrame(data.values, columns=list(data.col_names))
    frame.insert(0, "id", list(data.row_ids))
    if data.response is not None:
        frame[response_name] = data.response.astype(int)
    return frame


def coefficients_frame(coefs: Coefficients, col_names: Sequence[str]) -> pd.DataFrame:
    """
    Intercept first, then every predictor sorted by coefficient, largest first.
    """
    if len(col_names) != coefs.p:
        raise DimensionMismatchError("Column Names", len(col_names), coefs.p)
    order = np.argsort(-coefs.beta, kind="stable")
    return pd.DataFrame(
        {
            "name": [INTERCEPT_NAME] + [col_names[j] for j in order],
            "coefficient": np.concatenate(([coefs.intercept], coefs.beta[order])),
        }
    )


def outliers_frame(
    row_ids: Sequence[str],
    residuals: np.ndarray,
    fitted_prob: np.ndarray,
    flags: np.ndarray,
) -> pd.DataFrame:
    rows = np.flatnonzero(flags)
    return pd.DataFrame(
        {
            "row_id": [row_ids[i] for i in rows],
            "residual": np.asarray(residuals)[rows],
            "fitted_prob": np.asarray(fitted_prob)[rows],
        }
    )


__all__ = [
    "FLOAT_FORMAT",
    "INTERCEPT_NAME",
    "infer_separator",
    "load_dataset",
    "CsvTableWriter",
    "JsonWriter",
    "csv_writer",
    "json_writer",
    "dataset_frame",
    "coefficients_frame",
    "outliers_frame",
]
