"""
Joint (alpha, lambda) selection by repeated k-fold cross-validation on the held-out mean deviance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from robustlogit.definitions import (
    Coefficients,
    Dataset,
    Estimator,
    PenaltySpec,
    ResidualVariant,
    StandardizationMode,
    derive_seed,
)
from robustlogit.enet import SolverConfig, fit_enet_logistic, lambda_grid
from robustlogit.errors import ConfigError, NumericalError, RobustLogitError
from robustlogit.lts import LtsConfig, classify, fit_enet_lts, predict_prob
from robustlogit.model import (
    DEFAULT_CUTOFF,
    deviance,
    linear_predictor,
    pearson_residual,
    sigmoid,
)

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ["alpha", "lambda", "mean_deviance", "sd_deviance", "n_nonzero"]
BORDERLINE_MARGIN = 0.1


class RobustScoring(str, Enum):
    """
    How held-out rows are scored for the robust estimator.

    `Flagged` drops held-out rows whose residual under the training fit fails the
    reweighting criterion; `Trimmed` drops the largest (1 - h_fraction) share of held-out deviances.
    """

    Flagged = "flagged"
    Trimmed = "trimmed"


def _default_alpha_grid() -> Tuple[float, ...]:
    return tuple(round(a / 10.0, 10) for a in range(11))


@dataclass(frozen=True)
class CvConfig:
    k_folds: int = 5
    n_repeats: int = 10
    alpha_grid: Tuple[float, ...] = field(default_factory=_default_alpha_grid)
    n_lambda: int = 40
    lambda_ratio: float = 0.01
    stratified: bool = True
    rng_seed: int = 0
    estimator: Estimator = Estimator.Classical
    """ Explicit lambda values; when set they replace the per-alpha geometric grid """
    lambda_values: Optional[Tuple[float, ...]] = None
    robust_scoring: RobustScoring = RobustScoring.Flagged
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.k_folds < 2:
            raise ConfigError("k_folds", self.k_folds, "must be >= 2")
        if self.n_repeats < 1:
            raise ConfigError("n_repeats", self.n_repeats, "must be >= 1")
        if not self.alpha_grid:
            raise ConfigError("alpha_grid", self.alpha_grid, "must not be empty")
        if any(not 0.0 <= a <= 1.0 for a in self.alpha_grid):
            raise ConfigError("alpha_grid", self.alpha_grid, "values must lie in [0, 1]")
        if self.lambda_values is not None:
            if not self.lambda_values:
                raise ConfigError("lambda_values", self.lambda_values, "must not be empty")
            if any(not (math.isfinite(v) and v >= 0.0) for v in self.lambda_values):
                raise ConfigError("lambda_values", self.lambda_values, "values must be >= 0")
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        object.__setattr__(self, "robust_scoring", RobustScoring(self.robust_scoring))


@dataclass(frozen=True, eq=False)
class CvResult:
    """ One row per (alpha, lambda) cell; columns `alpha`, `lambda`, `mean_deviance`, `sd_deviance`, `n_nonzero`, `n_failed` """
    table: pd.DataFrame
    best_alpha: float
    best_lambda: float
    """ Shape (n_repeats, n_cells): per-repeat mean over folds """
    per_repeat_scores: np.ndarray
    """ Shape (n_repeats, n): fold label of every row in every repeat """
    folds: np.ndarray
    failed: Tuple[Tuple[float, float], ...] = ()

    def to_csv_frame(self) -> pd.DataFrame:
        return self.table.loc[:, TABLE_COLUMNS]


def make_folds(
    n: int, y: Optional[np.ndarray], k: int, stratified: bool, seed: int
) -> np.ndarray:
    """
    Fold labels 0..k-1. Rows are shuffled (within class when stratified), laid out class by
    class, and dealt round-robin, so fold sizes differ by at most one overall and per class.
    """
    if k < 2:
        raise ConfigError("k_folds", k, "must be >= 2")
    if k > n:
        raise ConfigError("k_folds", k, f"must not exceed the number of rows ({n})")
    rng = np.random.default_rng(seed)
    if stratified:
        if y is None:
            raise ConfigError("stratified", stratified, "requires a response")
        blocks = []
        for label in (0, 1):
            rows = np.flatnonzero(np.asarray(y) == label)
            if rows.shape[0] < k:
                raise ConfigError(
                    "k_folds", k, f"class {label} has only {rows.shape[0]} rows"
                )
            blocks.append(rng.permutation(rows))
        order = np.concatenate(blocks)
    else:
        order = rng.permutation(n)
    folds = np.empty(n, dtype=int)
    folds[order] = np.arange(n) % k
    return folds


def _grid(data: Dataset, cv: CvConfig, solver: SolverConfig, factors: Optional[Tuple[float, ...]]) -> List[Tuple[float, np.ndarray]]:
    grid = []
    for alpha in cv.alpha_grid:
        if cv.lambda_values is not None:
            lambdas = np.sort(np.asarray(cv.lambda_values, dtype=float))[::-1]
        else:
            lambdas = lambda_grid(data, alpha, factors, cv.n_lambda, cv.lambda_ratio, solver)
        grid.append((alpha, lambdas))
    return grid


def _held_out_score(
    coefs: Coefficients,
    test: Dataset,
    cv: CvConfig,
    lts: LtsConfig,
) -> float:
    y = test.require_response()
    eta = linear_predictor(test.values, coefs)
    dev = np.asarray(deviance(eta, y))
    if cv.estimator is Estimator.Robust:
        if cv.robust_scoring is RobustScoring.Flagged:
            prob = np.asarray(sigmoid(eta))
            residuals = pearson_residual(y, prob, lts.residual_variant)
            dev = dev[np.abs(residuals) < lts.cutoff]
        else:
            keep = max(1, int(math.floor(lts.h_fraction * dev.shape[0] + 1e-9)))
            dev = np.sort(dev)[:keep]
    if dev.shape[0] == 0:
        return math.nan
    return float(dev.mean())


class _FoldJob:
    def __init__(
        self,
        data: Dataset,
        grid: List[Tuple[float, np.ndarray]],
        cv: CvConfig,
        lts: LtsConfig,
        solver: SolverConfig,
        factors: Optional[Tuple[float, ...]],
    ) -> None:
        self.data = data
        self.grid = grid
        self.cv = cv
        self.lts = lts
        self.solver = solver
        self.factors = factors

    def run(self, repeat: int, fold: int, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        train = self.data.take_rows(np.flatnonzero(labels != fold))
        test = self.data.take_rows(np.flatnonzero(labels == fold))
        lts = replace(self.lts, rng_seed=derive_seed(self.lts.rng_seed, repeat, fold))
        scores: List[float] = []
        nonzero: List[float] = []
        for alpha, lambdas in self.grid:
            init: Optional[Coefficients] = None
            subsets: Optional[Sequence[np.ndarray]] = None
            for lam in lambdas:
                spec = PenaltySpec(alpha, float(lam), self.factors)
                try:
                    if self.cv.estimator is Estimator.Robust:
                        robust = fit_enet_lts(train, spec, lts, self.solver, warm_start=subsets)
                        coefs = robust.reweighted_coefs
                        subsets = robust.best_subsets
                    else:
                        coefs = fit_enet_logistic(train, spec, self.solver, init=init).coefs
                        init = coefs
                except RobustLogitError as exc:
                    logger.warning(
                        "CV cell (alpha=%g, lambda=%g) failed in repeat %d fold %d: %s",
                        alpha, lam, repeat, fold, exc,
                    )
                    init, subsets = None, None
                    scores.append(math.nan)
                    nonzero.append(math.nan)
                    continue
                scores.append(_held_out_score(coefs, test, self.cv, lts))
                nonzero.append(float(coefs.n_nonzero))
        logger.debug("CV repeat %d fold %d done", repeat, fold)
        return np.asarray(scores), np.asarray(nonzero)


def select_best(table: pd.DataFrame) -> Tuple[float, float]:
    """
    Cell with the lowest mean deviance; ties go to the larger lambda, then the larger alpha.
    """
    valid = table[np.isfinite(table["mean_deviance"].to_numpy(dtype=float))]
    if valid.empty:
        raise NumericalError("Every cross-validation cell failed")
    best = min(
        zip(valid["mean_deviance"], valid["lambda"], valid["alpha"]),
        key=lambda row: (row[0], -row[1], -row[2]),
    )
    return float(best[2]), float(best[1])


def cross_validate(
    data: Dataset,
    cv: Optional[CvConfig] = None,
    lts_config: Optional[LtsConfig] = None,
    solver_config: Optional[SolverConfig] = None,
    *,
    penalty_factors: Optional[Tuple[float, ...]] = None,
    folds: Optional[np.ndarray] = None,
) -> CvResult:
    """
    Repeated k-fold cross-validation over the (alpha, lambda) grid.

    Every lambda path is walked from the largest lambda down with warm starts. The lambda
    grid is computed once on the full data so all folds share the same cells.

    :param folds: explicit fold labels of shape (n_repeats, n); drawn from `cv.rng_seed` when omitted.
    """
    cv = cv or CvConfig()
    lts = lts_config or LtsConfig()
    solver = solver_config or SolverConfig()
    if cv.estimator is Estimator.Robust:
        solver = replace(solver, standardization_mode=StandardizationMode.Robust)
    y = data.require_both_classes()

    if folds is None:
        folds = np.stack(
            [
                make_folds(data.n, y, cv.k_folds, cv.stratified, derive_seed(cv.rng_seed, r))
                for r in range(cv.n_repeats)
            ]
        )
    folds = np.asarray(folds, dtype=int)
    if folds.shape != (cv.n_repeats, data.n):
        raise ConfigError("folds", folds.shape, f"must have shape {(cv.n_repeats, data.n)}")

    grid = _grid(data, cv, solver, penalty_factors)
    cells = [(alpha, float(lam)) for alpha, lambdas in grid for lam in lambdas]
    logger.info(
        "Cross-validating %d cells, %d repeats x %d folds (%s)",
        len(cells), cv.n_repeats, cv.k_folds, cv.estimator.value,
    )
    job = _FoldJob(data, grid, cv, lts, solver, penalty_factors)
    tasks = [(r, f) for r in range(cv.n_repeats) for f in range(cv.k_folds)]
    outputs = Parallel(n_jobs=cv.n_jobs)(
        delayed(job.run)(r, f, folds[r]) for r, f in tasks
    )
    scores = np.full((cv.n_repeats, cv.k_folds, len(cells)), math.nan)
    nonzero = np.full_like(scores, math.nan)
    for (r, f), (s, z) in zip(tasks, outputs):
        scores[r, f] = s
        nonzero[r, f] = z

    flat = scores.reshape(-1, len(cells))
    finite = np.isfinite(flat)
    counts = finite.sum(axis=0)
    totals = np.where(finite, flat, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, totals / np.maximum(counts, 1), math.nan)
        squares = np.where(finite, (flat - means) ** 2, 0.0).sum(axis=0)
        sds = np.where(counts > 1, np.sqrt(squares / np.maximum(counts - 1, 1)), 0.0)
        repeat_finite = np.isfinite(scores)
        repeat_counts = repeat_finite.sum(axis=1)
        per_repeat = np.where(
            repeat_counts > 0,
            np.where(repeat_finite, scores, 0.0).sum(axis=1) / np.maximum(repeat_counts, 1),
            math.nan,
        )
        flat_nonzero = nonzero.reshape(-1, len(cells))
        mean_nonzero = np.where(
            counts > 0,
            np.where(finite, flat_nonzero, 0.0).sum(axis=0) / np.maximum(counts, 1),
            math.nan,
        )

    table = pd.DataFrame(
        {
            "alpha": [c[0] for c in cells],
            "lambda": [c[1] for c in cells],
            "mean_deviance": means,
            "sd_deviance": np.where(counts > 0, sds, math.nan),
            "n_nonzero": mean_nonzero,
            "n_failed": flat.shape[0] - counts,
        }
    )
    failed = tuple(cells[i] for i in np.flatnonzero(counts == 0))
    if failed:
        logger.warning("%d grid cells failed in every fold and were excluded", len(failed))
    best_alpha, best_lambda = select_best(table)
    logger.info("Selected alpha=%g lambda=%g", best_alpha, best_lambda)
    return CvResult(
        table=table,
        best_alpha=best_alpha,
        best_lambda=best_lambda,
        per_repeat_scores=per_repeat,
        folds=folds,
        failed=failed,
    )


@dataclass(frozen=True, eq=False)
class HoldoutReport:
    probabilities: np.ndarray
    predicted: np.ndarray
    """ Row indices whose predicted class differs from the recorded label """
    mismatches: np.ndarray
    """ Row indices failing the reweighting criterion under the fitted model """
    flagged: np.ndarray
    """ Row indices predicted within BORDERLINE_MARGIN of the 0.5 threshold """
    borderline: np.ndarray

    @property
    def n(self) -> int:
        return int(self.probabilities.shape[0])

    @property
    def n_mismatches(self) -> int:
        return int(self.mismatches.shape[0])


def evaluate_holdout(
    coefs: Coefficients,
    data: Dataset,
    cutoff: float = DEFAULT_CUTOFF,
    variant: ResidualVariant = ResidualVariant.AsPrinted,
    threshold: float = 0.5,
) -> HoldoutReport:
    y = data.require_response()
    prob = predict_prob(coefs, data)
    predicted = classify(prob, threshold)
    residuals = pearson_residual(y, prob, variant)
    return HoldoutReport(
        probabilities=prob,
        predicted=predicted,
        mismatches=np.flatnonzero(predicted != y),
        flagged=np.flatnonzero(np.abs(residuals) >= cutoff),
        borderline=np.flatnonzero(np.abs(prob - threshold) < BORDERLINE_MARGIN),
    )


__all__ = [
    "RobustScoring",
    "CvConfig",
    "CvResult",
    "HoldoutReport",
    "make_folds",
    "cross_validate",
    "select_best",
    "evaluate_holdout",
]
