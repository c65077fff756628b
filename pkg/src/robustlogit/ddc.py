"""
Cellwise outlier detection.

Every cell is predicted from the robustly correlated columns of its own row; cells whose
robustly standardized prediction residual exceeds sqrt(chi2_1(q)) are flagged high or low.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import chi2, median_abs_deviation

from robustlogit.definitions import Dataset
from robustlogit.enet import MAD_CONSISTENCY
from robustlogit.errors import ConfigError, DataError, DimensionMismatchError

logger = logging.getLogger(__name__)

CORRELATION_TRIM = 3.0
MIN_CLEAN_PAIRS = 10
MIN_FINITE = 3
""" sqrt(chi2_1(0.99)); cells beyond it are not used as predictors of other cells """
PREMASK_CUTOFF = 2.5758


class CellFlag(IntEnum):
    Normal = 0
    High = 1
    Low = 2
    Missing = 3

    @property
    def symbol(self) -> str:
        return _SYMBOLS[self]


_SYMBOLS = {
    CellFlag.Normal: ".",
    CellFlag.High: "+",
    CellFlag.Low: "-",
    CellFlag.Missing: "?",
}


@dataclass(frozen=True)
class DdcConfig:
    """ Minimum |robust correlation| for a column to predict another """
    corr_threshold: float = 0.5
    flag_quantile: float = 0.99
    max_predictors: int = 10
    """ Floor for every robust scale """
    min_mad: float = 1e-8
    premask_cutoff: float = PREMASK_CUTOFF
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.corr_threshold < 1.0:
            raise ConfigError("corr_threshold", self.corr_threshold, "must lie in (0, 1)")
        if not 0.5 < self.flag_quantile < 1.0:
            raise ConfigError("flag_quantile", self.flag_quantile, "must lie in (0.5, 1)")
        if self.max_predictors < 1:
            raise ConfigError("max_predictors", self.max_predictors, "must be >= 1")
        if not self.min_mad > 0.0:
            raise ConfigError("min_mad", self.min_mad, "must be > 0")
        if not self.premask_cutoff > 0.0:
            raise ConfigError("premask_cutoff", self.premask_cutoff, "must be > 0")

    @property
    def cutoff(self) -> float:
        return flag_cutoff(self.flag_quantile)


def flag_cutoff(quantile: float) -> float:
    return float(math.sqrt(chi2.ppf(quantile, 1)))


def _zero_center(values: np.ndarray, axis: Optional[int] = None) -> float:
    return 0.0


def _robust_scale(values: np.ndarray, floor: float, about_zero: bool = False) -> float:
    center = _zero_center if about_zero else np.median
    scale = float(
        median_abs_deviation(
            values, center=center, scale=1.0 / MAD_CONSISTENCY, nan_policy="omit"
        )
    )
    if not math.isfinite(scale):
        return floor
    return max(scale, floor)


def robust_standardize(
    column: np.ndarray, min_mad: float = 1e-8
) -> Tuple[float, float, np.ndarray]:
    """
    Median centre, 1.4826 * MAD scale (floored at `min_mad`) and the z-scores of one column.

    Missing entries stay missing.
    """
    x = np.asarray(column, dtype=float)
    finite = x[np.isfinite(x)]
    if finite.shape[0] < MIN_FINITE:
        raise DataError(
            f"Robust standardization needs at least {MIN_FINITE} finite values; got {finite.shape[0]}"
        )
    center = float(np.median(finite))
    scale = _robust_scale(finite - center, min_mad)
    return center, scale, (x - center) / scale


def robust_bivariate_corr(zj: np.ndarray, zk: np.ndarray) -> float:
    """
    Pearson correlation of the jointly finite pairs with both |z| <= 3.

    Fewer than 10 such pairs, or a pair without spread, gives 0.
    """
    a = np.asarray(zj, dtype=float)
    b = np.asarray(zk, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError("Column Pair", b.shape[0], a.shape[0])
    with np.errstate(invalid="ignore"):
        keep = (
            np.isfinite(a)
            & np.isfinite(b)
            & (np.abs(a) <= CORRELATION_TRIM)
            & (np.abs(b) <= CORRELATION_TRIM)
        )
    if int(keep.sum()) < MIN_CLEAN_PAIRS:
        return 0.0
    a, b = a[keep], b[keep]
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return 0.0
    return float(np.clip(float(a @ b) / denom, -1.0, 1.0))


def _correlation_row(z: np.ndarray, j: int) -> np.ndarray:
    row = np.zeros(z.shape[1])
    for k in range(j + 1, z.shape[1]):
        row[k] = robust_bivariate_corr(z[:, j], z[:, k])
    return row


def robust_correlations(z: np.ndarray, n_jobs: int = 1) -> np.ndarray:
    p = z.shape[1]
    rows = Parallel(n_jobs=n_jobs)(delayed(_correlation_row)(z, j) for j in range(p))
    upper = np.vstack(rows) if rows else np.zeros((0, 0))
    corr = upper + upper.T
    np.fill_diagonal(corr, 1.0)
    return np.asarray(corr)


def select_predictors(
    corr: np.ndarray, j: int, threshold: float, max_predictors: int
) -> np.ndarray:
    """
    Up to `max_predictors` columns k != j with |corr(j, k)| >= threshold, strongest first.
    """
    strength = np.abs(corr[j]).copy()
    strength[j] = 0.0
    candidates = np.flatnonzero(strength >= threshold)
    ordered = candidates[np.argsort(-strength[candidates], kind="stable")]
    return ordered[:max_predictors]


def predict_cells(
    z: np.ndarray,
    config: Optional[DdcConfig] = None,
    corr: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Predicted z of every cell: the |corr|-weighted mean of corr(j, k) * z_ik over the
    predictors k of column j that are present in row i. Rows without any present predictor
    (and columns without predictors) are predicted at the column centre, 0.

    Cells with |z| above `premask_cutoff` are treated as missing when used as predictors.
    """
    config = config or DdcConfig()
    z = np.asarray(z, dtype=float)
    if corr is None:
        corr = robust_correlations(z, config.n_jobs)
    with np.errstate(invalid="ignore"):
        usable = np.where(np.abs(z) > config.premask_cutoff, np.nan, z)
    present = np.isfinite(usable)
    filled = np.where(present, usable, 0.0)

    predicted = np.zeros_like(z)
    for j in range(z.shape[1]):
        predictors = select_predictors(corr, j, config.corr_threshold, config.max_predictors)
        if predictors.shape[0] == 0:
            continue
        slopes = corr[j, predictors]
        weights = np.abs(slopes)
        mask = present[:, predictors]
        total = mask @ weights
        contribution = filled[:, predictors] @ (weights * slopes)
        predicted[:, j] = np.where(total > 0.0, contribution / np.where(total > 0.0, total, 1.0), 0.0)
    return predicted


@dataclass(frozen=True, eq=False)
class CellMap:
    flags: np.ndarray
    residuals: np.ndarray
    predicted: np.ndarray
    row_scores: np.ndarray
    row_ids: Tuple[str, ...]
    col_names: Tuple[str, ...]
    cutoff: float

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.flags.shape[0]), int(self.flags.shape[1])

    @property
    def n_flagged(self) -> int:
        return int(np.isin(self.flags, (CellFlag.High, CellFlag.Low)).sum())

    def flagged_cells(self) -> List[Tuple[int, int]]:
        rows, cols = np.nonzero(np.isin(self.flags, (CellFlag.High, CellFlag.Low)))
        return list(zip(rows.tolist(), cols.tolist()))

    def subset(
        self, rows: Optional[Sequence[int]] = None, cols: Optional[Sequence[int]] = None
    ) -> CellMap:
        r = np.arange(self.shape[0]) if rows is None else np.asarray(rows, dtype=int)
        c = np.arange(self.shape[1]) if cols is None else np.asarray(cols, dtype=int)
        grid = np.ix_(r, c)
        return CellMap(
            flags=self.flags[grid],
            residuals=self.residuals[grid],
            predicted=self.predicted[grid],
            row_scores=self.row_scores[r],
            row_ids=tuple(self.row_ids[i] for i in r),
            col_names=tuple(self.col_names[j] for j in c),
            cutoff=self.cutoff,
        )

    def to_frame(self) -> pd.DataFrame:
        """ Long format, one row per cell: row, col, flag, residual """
        n, p = self.shape
        return pd.DataFrame(
            {
                "row": np.repeat(np.asarray(self.row_ids, dtype=object), p),
                "col": np.tile(np.asarray(self.col_names, dtype=object), n),
                "flag": [CellFlag(f).name.lower() for f in self.flags.ravel().tolist()],
                "residual": self.residuals.ravel(),
            }
        )


def flag_cells(
    z: np.ndarray,
    predicted: np.ndarray,
    config: Optional[DdcConfig] = None,
    row_ids: Optional[Sequence[str]] = None,
    col_names: Optional[Sequence[str]] = None,
) -> CellMap:
    """
    Standardize z - predicted by each column's robust residual scale and flag cells beyond the cutoff.
    """
    config = config or DdcConfig()
    z = np.asarray(z, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if z.shape != predicted.shape:
        raise DimensionMismatchError("Predicted Cells", predicted.shape[0], z.shape[0])
    n, p = z.shape
    raw = z - predicted
    residuals = np.full_like(raw, np.nan)
    for j in range(p):
        column = raw[:, j]
        finite = np.isfinite(column)
        if not finite.any():
            continue
        # deviations from the prediction are already centred at 0
        scale = _robust_scale(column[finite], config.min_mad, about_zero=True)
        residuals[finite, j] = column[finite] / scale

    cutoff = config.cutoff
    flags = np.full((n, p), CellFlag.Normal, dtype=np.int8)
    missing = ~np.isfinite(residuals)
    flags[missing] = CellFlag.Missing
    with np.errstate(invalid="ignore"):
        flags[residuals > cutoff] = CellFlag.High
        flags[residuals < -cutoff] = CellFlag.Low
    squares = np.where(missing, 0.0, residuals**2)
    counts = (~missing).sum(axis=1)
    row_scores = np.where(counts > 0, squares.sum(axis=1) / np.maximum(counts, 1), np.nan)
    return CellMap(
        flags=flags,
        residuals=residuals,
        predicted=predicted,
        row_scores=row_scores,
        row_ids=tuple(row_ids) if row_ids is not None else tuple(str(i) for i in range(n)),
        col_names=tuple(col_names) if col_names is not None else tuple(str(j) for j in range(p)),
        cutoff=cutoff,
    )


def detect_deviating_cells(data: Dataset, config: Optional[DdcConfig] = None) -> CellMap:
    config = config or DdcConfig()
    if data.n_missing:
        logger.info("%d missing cells are left unflagged", data.n_missing)
    z = np.empty((data.n, data.p))
    for j in range(data.p):
        try:
            _, _, z[:, j] = robust_standardize(data.values[:, j], config.min_mad)
        except DataError as exc:
            raise DataError(str(exc), column=data.col_names[j]) from exc
    corr = robust_correlations(z, config.n_jobs)
    predicted = predict_cells(z, config, corr)
    cell_map = flag_cells(z, predicted, config, data.row_ids, data.col_names)
    logger.info(
        "Flagged %d of %d cells (cutoff %.4f)",
        cell_map.n_flagged, data.n * data.p, cell_map.cutoff,
    )
    return cell_map


__all__ = [
    "CellFlag",
    "DdcConfig",
    "CellMap",
    "flag_cutoff",
    "robust_standardize",
    "robust_bivariate_corr",
    "robust_correlations",
    "select_predictors",
    "predict_cells",
    "flag_cells",
    "detect_deviating_cells",
]
