from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from robustlogit.errors import (
    DataError,
    DimensionMismatchError,
    PenaltyError,
    ResponseError,
)


class Estimator(str, Enum):
    Classical = "classical"
    Robust = "robust"


class StandardizationMode(str, Enum):
    Classical = "classical"
    Robust = "robust"


class ResidualVariant(str, Enum):
    AsPrinted = "as-printed"
    Sqrt = "sqrt"


def derive_seed(seed: int, *keys: int) -> int:
    """
    Child seed for a sub-task: the first 32-bit word of SeedSequence([seed, *keys]).

    Every random stream in a run (folds per repeat, LTS starts per fold, simulation) is
    derived from the single run seed this way.
    """
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _first_duplicate(names: Sequence[str]) -> Optional[str]:
    counts = Counter(names)
    for name in names:
        if counts[name] > 1:
            return name
    return None


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    A numeric predictor matrix with unique column names and row ids, and an optional binary response.

    Values are stored column-major and read-only. Missing values (NaN) are only accepted
    when `allow_missing` is set; that is reserved for cellwise outlier detection.
    """

    values: np.ndarray
    col_names: Tuple[str, ...]
    row_ids: Tuple[str, ...]
    response: Optional[np.ndarray] = None
    allow_missing: bool = False

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, order="F", copy=True)
        if values.ndim != 2:
            raise DataError(f"Predictor matrix must be 2-dimensional; got {values.ndim}")
        n, p = values.shape
        col_names = tuple(str(c) for c in self.col_names)
        row_ids = tuple(str(r) for r in self.row_ids)
        if len(col_names) != p:
            raise DimensionMismatchError("Column Names", len(col_names), p)
        if len(row_ids) != n:
            raise DimensionMismatchError("Row Ids", len(row_ids), n)
        duplicate = _first_duplicate(col_names)
        if duplicate is not None:
            raise DataError("Duplicate column name", column=duplicate)
        duplicate = _first_duplicate(row_ids)
        if duplicate is not None:
            raise DataError("Duplicate row id", row=duplicate)

        if np.isinf(values).any():
            i, j = np.argwhere(np.isinf(values))[0]
            raise DataError("Infinite value", row=row_ids[i], column=col_names[j])
        if not self.allow_missing and np.isnan(values).any():
            i, j = np.argwhere(np.isnan(values))[0]
            raise DataError("Missing value", row=row_ids[i], column=col_names[j])
        values.flags.writeable = False

        response = self.response
        if response is not None:
            raw = np.asarray(response, dtype=float).ravel()
            if raw.shape[0] != n:
                raise DimensionMismatchError("Response", raw.shape[0], n)
            if not np.isin(raw, (0.0, 1.0)).all():
                raise ResponseError("response must only contain 0 and 1")
            response = raw.astype(np.int8)
            response.flags.writeable = False

        object.__setattr__(self, "values", values)
        object.__setattr__(self, "col_names", col_names)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "response", response)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def p(self) -> int:
        return int(self.values.shape[1])

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())

    def require_response(self) -> np.ndarray:
        if self.response is None:
            raise ResponseError("dataset has no response")
        return self.response

    def require_both_classes(self, weights: Optional[np.ndarray] = None) -> np.ndarray:
        y = self.require_response()
        active = y if weights is None else y[np.asarray(weights) > 0]
        if active.size == 0 or active.min() == active.max():
            raise ResponseError()
        return y

    def column_index(self, name: str) -> int:
        try:
            return self.col_names.index(name)
        except ValueError as exc:
            raise DataError("Unknown column", column=name) from exc

    def take_rows(self, rows: Sequence[int]) -> Dataset:
        idx = np.asarray(rows, dtype=int)
        return Dataset(
            self.values[idx, :],
            self.col_names,
            tuple(self.row_ids[i] for i in idx),
            None if self.response is None else self.response[idx],
            self.allow_missing,
        )

    def select_columns(self, names: Sequence[str]) -> Dataset:
        idx = [self.column_index(name) for name in names]
        return Dataset(
            self.values[:, idx],
            tuple(names),
            self.row_ids,
            self.response,
            self.allow_missing,
        )

    def with_response(self, response: Optional[np.ndarray]) -> Dataset:
        return Dataset(
            self.values, self.col_names, self.row_ids, response, self.allow_missing
        )


@dataclass(frozen=True)
class PenaltySpec:
    """
    Elastic-net penalty: level `lambda_`, L1/L2 mix `alpha` and per-coefficient penalty factors.
    """

    alpha: float
    lambda_: float
    """ `None` means every coefficient has factor 1 """
    penalty_factors: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise PenaltyError(f"alpha must lie in [0, 1]; got {self.alpha}")
        if not (np.isfinite(self.lambda_) and self.lambda_ >= 0.0):
            raise PenaltyError(f"lambda must be >= 0; got {self.lambda_}")
        if self.penalty_factors is not None:
            factors = tuple(float(f) for f in self.penalty_factors)
            if any(not np.isfinite(f) or f < 0.0 for f in factors):
                raise PenaltyError("penalty factors must be finite and >= 0")
            object.__setattr__(self, "penalty_factors", factors)

    def factors(self, p: int) -> np.ndarray:
        if self.penalty_factors is None:
            return np.ones(p)
        if len(self.penalty_factors) != p:
            raise DimensionMismatchError("Penalty Factors", len(self.penalty_factors), p)
        return np.asarray(self.penalty_factors, dtype=float)

    def with_lambda(self, lambda_: float) -> PenaltySpec:
        return PenaltySpec(self.alpha, lambda_, self.penalty_factors)


@dataclass(frozen=True, eq=False)
class Coefficients:
    intercept: float
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        beta = np.array(self.beta, dtype=float).ravel()
        beta.flags.writeable = False
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "beta", beta)

    @property
    def p(self) -> int:
        return int(self.beta.shape[0])

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.beta))

    @classmethod
    def zeros(cls, p: int, intercept: float = 0.0) -> Coefficients:
        return cls(intercept, np.zeros(p))


__all__ = [
    "Estimator",
    "StandardizationMode",
    "ResidualVariant",
    "derive_seed",
    "Dataset",
    "PenaltySpec",
    "Coefficients",
]
