"""
Robust sparse logistic regression: the enet-LTS estimator and its reweighting step.

The raw fit minimises the trimmed objective sum_{i in H} d_i + h * lambda * P(beta) over
class-proportional h-subsets H, searched from elemental starts by concentration steps.
A weighted refit on the rows whose residual stays below the cutoff gives the reweighted
estimator.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from robustlogit.definitions import (
    Coefficients,
    Dataset,
    PenaltySpec,
    ResidualVariant,
    StandardizationMode,
)
from robustlogit.enet import (
    FitResult,
    SolverConfig,
    Standardization,
    fit_enet_logistic,
    standardize_columns,
)
from robustlogit.errors import (
    ConfigError,
    ConstantColumnWarning,
    DataError,
    InsufficientClassSizeError,
    NoValidSubsetError,
    RobustLogitError,
)
from robustlogit.model import (
    DEFAULT_CUTOFF,
    linear_predictor,
    observation_deviances,
    pearson_residual,
    sigmoid,
)

logger = logging.getLogger(__name__)

MIN_OBSERVATIONS = 10
MIN_PER_CLASS = 2


@dataclass(frozen=True)
class LtsConfig:
    h_fraction: float = 0.85
    n_initial_subsets: int = 500
    """ Rows per elemental start, split evenly between the two classes """
    elemental_size: int = 4
    n_best_keep: int = 10
    warmup_csteps: int = 2
    max_csteps: int = 50
    cutoff: float = DEFAULT_CUTOFF
    residual_variant: ResidualVariant = ResidualVariant.AsPrinted
    rng_seed: int = 0
    """ Iteration caps for the elemental fits; separable starts stop here instead of diverging """
    elemental_max_iters: int = 50
    elemental_max_sweeps: int = 200
    """ Also start from the least outlying rows under the robust standardization """
    outlyingness_start: bool = True
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if not 0.5 < self.h_fraction <= 1.0:
            raise ConfigError("h_fraction", self.h_fraction, "must lie in (0.5, 1]")
        if self.elemental_size < 2 * MIN_PER_CLASS or self.elemental_size % 2:
            raise ConfigError("elemental_size", self.elemental_size, "must be even and >= 4")
        for name in (
            "n_initial_subsets",
            "n_best_keep",
            "max_csteps",
            "elemental_max_iters",
            "elemental_max_sweeps",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(name, getattr(self, name), "must be >= 1")
        if self.warmup_csteps < 0:
            raise ConfigError("warmup_csteps", self.warmup_csteps, "must be >= 0")
        if not self.cutoff > 0.0:
            raise ConfigError("cutoff", self.cutoff, "must be > 0")
        object.__setattr__(self, "residual_variant", ResidualVariant(self.residual_variant))


@dataclass(frozen=True)
class HSplit:
    h: int
    h0: int
    h1: int


def h_from_fraction(n: int, fraction: float) -> int:
    if not 0.5 < fraction <= 1.0:
        raise ConfigError("h_fraction", fraction, "must lie in (0.5, 1]")
    # the epsilon keeps products such as 0.29 * 100 from flooring one short
    return min(n, int(math.floor(fraction * n + 1e-9)))


def h_lower_bound(n: int, p: int) -> int:
    return (n + p + 1) // 2


def class_split(h: int, y: np.ndarray) -> HSplit:
    """
    Allocate h between the classes proportionally: h1 = round(h * n1 / n), h0 = h - h1.
    """
    n = int(y.shape[0])
    n1 = int(np.sum(y == 1))
    n0 = n - n1
    h1 = min(int(math.floor(h * n1 / n + 0.5)), n1)
    h0 = h - h1
    if h0 > n0:
        h0, h1 = n0, h - n0
    if h1 < MIN_PER_CLASS:
        raise InsufficientClassSizeError(1, h1, MIN_PER_CLASS)
    if h0 < MIN_PER_CLASS:
        raise InsufficientClassSizeError(0, h0, MIN_PER_CLASS)
    return HSplit(h, h0, h1)


def c_step(data: Dataset, coefs: Coefficients, h: int) -> np.ndarray:
    """
    Concentration step: the h1 smallest-deviance class-1 rows plus the h0 smallest-deviance
    class-0 rows under `coefs`; ties keep the lower row index. Returns sorted row indices.
    """
    y = data.require_response()
    split = class_split(h, y)
    dev = observation_deviances(data, coefs)
    keep = []
    for label, size in ((0, split.h0), (1, split.h1)):
        rows = np.flatnonzero(y == label)
        ordered = rows[np.argsort(dev[rows], kind="stable")]
        keep.append(ordered[:size])
    return np.sort(np.concatenate(keep))


def trimmed_objective(
    data: Dataset,
    coefs: Coefficients,
    subset: np.ndarray,
    spec: PenaltySpec,
    standardization: Standardization,
) -> float:
    """
    sum_{i in H} d_i + |H| * lambda * P(gamma), with the penalty on the standardized coefficients.
    """
    dev = observation_deviances(data, coefs)[subset]
    _, gamma = standardization.to_standardized(coefs)
    scaled = spec.factors(data.p) * gamma
    penalty = (1.0 - spec.alpha) * 0.5 * float(scaled @ scaled) + spec.alpha * float(
        np.abs(scaled).sum()
    )
    return float(dev.sum()) + subset.shape[0] * spec.lambda_ * penalty


@dataclass(frozen=True, eq=False)
class _Candidate:
    subset_id: int
    coefs: Coefficients
    subset: np.ndarray
    objective: float
    trace: Tuple[float, ...] = ()
    fit: Optional[FitResult] = None


@dataclass(frozen=True, eq=False)
class RobustFitResult:
    raw_coefs: Coefficients
    reweighted_coefs: Coefficients
    weights: np.ndarray
    outlier_flags: np.ndarray
    h_subset: np.ndarray
    pearson_residuals: np.ndarray
    spec: PenaltySpec
    h: int
    """ Trimmed objective of the selected h-subset under the search standardization """
    raw_objective: float
    raw_fit: FitResult
    reweighted_fit: FitResult
    cutoff: float
    """ Trimmed objective after every C-step, one tuple per retained candidate """
    csteps_traces: Tuple[Tuple[float, ...], ...] = ()
    best_subsets: Tuple[np.ndarray, ...] = ()
    n_failed_subsets: int = 0
    """ Reweighting left a class with fewer than two rows; the raw h-subset fit stands in """
    reweight_fallback: bool = False

    @property
    def coefs(self) -> Coefficients:
        return self.reweighted_coefs

    @property
    def fitted_prob(self) -> np.ndarray:
        return self.reweighted_fit.fitted_prob

    @property
    def n_outliers(self) -> int:
        return int(self.outlier_flags.sum())


class _Concentrator:
    """
    Runs fits and C-steps for one (data, penalty) problem under a fixed standardization.
    """

    def __init__(
        self,
        data: Dataset,
        spec: PenaltySpec,
        h: int,
        standardization: Standardization,
        solver: SolverConfig,
        lts: LtsConfig,
    ) -> None:
        self.data = data
        self.spec = spec
        self.h = h
        self.standardization = standardization
        self.solver = solver
        self.elemental_solver = replace(
            solver,
            max_outer_iters=min(lts.elemental_max_iters, solver.max_outer_iters),
            max_inner_sweeps=min(lts.elemental_max_sweeps, solver.max_inner_sweeps),
        )

    def fit_on(
        self,
        subset: np.ndarray,
        init: Optional[Coefficients],
        config: Optional[SolverConfig] = None,
    ) -> FitResult:
        weights = np.zeros(self.data.n)
        weights[subset] = 1.0
        config = (config or self.solver).with_weights(weights)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConstantColumnWarning)
            return fit_enet_logistic(
                self.data, self.spec, config, init=init, standardization=self.standardization
            )

    def concentrate(
        self, candidate: _Candidate, steps: int, stop_when_stable: bool
    ) -> _Candidate:
        for _ in range(steps):
            subset = c_step(self.data, candidate.coefs, self.h)
            if stop_when_stable and np.array_equal(subset, candidate.subset):
                break
            fit = self.fit_on(subset, candidate.coefs)
            candidate = _Candidate(
                candidate.subset_id,
                fit.coefs,
                subset,
                fit.objective,
                candidate.trace + (fit.objective,),
                fit,
            )
        return candidate

    def elemental_start(
        self, subset_id: int, subset: np.ndarray, warmup: int
    ) -> Optional[_Candidate]:
        try:
            fit = self.fit_on(subset, None, self.elemental_solver)
            start = _Candidate(subset_id, fit.coefs, subset, math.inf)
            return self.concentrate(start, warmup, stop_when_stable=False)
        except (RobustLogitError, FloatingPointError, np.linalg.LinAlgError) as exc:
            logger.debug("Elemental subset %d skipped: %s", subset_id, exc)
            return None

    def subset_start(
        self, subset_id: int, subset: np.ndarray, warmup: int = 0
    ) -> Optional[_Candidate]:
        try:
            fit = self.fit_on(subset, None)
            start = _Candidate(subset_id, fit.coefs, subset, fit.objective, (fit.objective,), fit)
            return self.concentrate(start, warmup, stop_when_stable=True)
        except (RobustLogitError, FloatingPointError, np.linalg.LinAlgError) as exc:
            logger.debug("Start subset %d skipped: %s", subset_id, exc)
            return None


def _draw_elemental_subsets(
    y: np.ndarray, count: int, size: int, rng: np.random.Generator
) -> List[np.ndarray]:
    per_class = size // 2
    rows0 = np.flatnonzero(y == 0)
    rows1 = np.flatnonzero(y == 1)
    if rows0.shape[0] < per_class:
        raise InsufficientClassSizeError(0, int(rows0.shape[0]), per_class)
    if rows1.shape[0] < per_class:
        raise InsufficientClassSizeError(1, int(rows1.shape[0]), per_class)
    return [
        np.sort(
            np.concatenate(
                (
                    rng.choice(rows0, per_class, replace=False),
                    rng.choice(rows1, per_class, replace=False),
                )
            )
        )
        for _ in range(count)
    ]


def least_outlying_subset(
    data: Dataset, h: int, standardization: Standardization
) -> np.ndarray:
    """
    Class-proportional h-subset of the rows with the smallest squared robust distance
    sum_j z_ij^2 under a diagonal (median/MAD) scatter; ties keep the lower row index.
    """
    y = data.require_response()
    split = class_split(h, y)
    distance = np.square(standardization.apply(data.values)).sum(axis=1)
    keep = []
    for label, size in ((0, split.h0), (1, split.h1)):
        rows = np.flatnonzero(y == label)
        keep.append(rows[np.argsort(distance[rows], kind="stable")][:size])
    return np.sort(np.concatenate(keep))


def _ranked(candidates: Sequence[Optional[_Candidate]]) -> List[_Candidate]:
    valid = [c for c in candidates if c is not None]
    return sorted(valid, key=lambda c: (c.objective, c.subset_id))


def fit_enet_lts(
    data: Dataset,
    spec: PenaltySpec,
    lts_config: Optional[LtsConfig] = None,
    solver_config: Optional[SolverConfig] = None,
    *,
    warm_start: Optional[Sequence[np.ndarray]] = None,
) -> RobustFitResult:
    """
    Reweighted enet-LTS fit.

    The raw phase draws `n_initial_subsets` elemental subsets (half per class), fits each,
    runs `warmup_csteps` C-steps, keeps the `n_best_keep` lowest trimmed objectives and
    iterates C-steps on those until the h-subset is stable or `max_csteps` is reached.
    One further start takes the least outlying rows. The search shares one robust
    (median/MAD) standardization of the full data so candidate objectives are comparable;
    the returned raw fit is refitted on the selected h-subset with that subset's median/MAD.
    `warm_start` replaces the elemental search by the given h-subsets (used along a lambda
    path). If reweighting would leave a class with fewer than two rows, the raw fit is kept
    as the reweighted fit and `weights` marks the h-subset.
    """
    lts_config = lts_config or LtsConfig()
    solver_config = (solver_config or SolverConfig()).with_weights(None)
    y = data.require_both_classes()
    if data.n < MIN_OBSERVATIONS:
        raise DataError(f"enet-LTS needs at least {MIN_OBSERVATIONS} observations; got {data.n}")
    h = h_from_fraction(data.n, lts_config.h_fraction)
    if h < lts_config.elemental_size:
        raise ConfigError("h_fraction", lts_config.h_fraction, "h must be >= elemental_size")
    class_split(h, y)

    search_standardization = standardize_columns(
        data.values, np.ones(data.n), StandardizationMode.Robust, solver_config.standardize
    )
    worker = _Concentrator(data, spec, h, search_standardization, solver_config, lts_config)
    parallel = Parallel(n_jobs=lts_config.n_jobs)
    n_failed = 0

    if h == data.n:
        logger.debug("h = n; trimming disabled, fitting all rows once")
        everything = np.arange(data.n)
        fit = worker.fit_on(everything, None)
        kept = [_Candidate(0, fit.coefs, everything, fit.objective, (fit.objective,), fit)]
    else:
        if warm_start:
            starts = parallel(
                delayed(worker.subset_start)(i, np.asarray(s, dtype=int))
                for i, s in enumerate(warm_start)
            )
        else:
            rng = np.random.default_rng(lts_config.rng_seed)
            subsets = _draw_elemental_subsets(
                y, lts_config.n_initial_subsets, lts_config.elemental_size, rng
            )
            starts = parallel(
                delayed(worker.elemental_start)(i, s, lts_config.warmup_csteps)
                for i, s in enumerate(subsets)
            )
            if lts_config.outlyingness_start:
                starts.append(
                    worker.subset_start(
                        len(subsets),
                        least_outlying_subset(data, h, search_standardization),
                        lts_config.warmup_csteps,
                    )
                )
        n_failed = sum(1 for s in starts if s is None)
        if n_failed:
            logger.warning("%d of %d initial subsets failed", n_failed, len(starts))
        ranked = _ranked(starts)
        if not ranked:
            raise NoValidSubsetError(len(starts))
        best = ranked[: lts_config.n_best_keep]
        kept = _ranked(
            parallel(
                delayed(worker.concentrate)(c, lts_config.max_csteps, True) for c in best
            )
        )

    raw = kept[0]
    logger.debug("Raw enet-LTS objective %.10g from subset %d", raw.objective, raw.subset_id)
    # final raw fit: median/MAD of the selected h-subset
    h_weights = np.zeros(data.n)
    h_weights[raw.subset] = 1.0
    raw_fit = fit_enet_logistic(
        data,
        spec,
        replace(solver_config, standardization_mode=StandardizationMode.Robust).with_weights(
            h_weights
        ),
        init=raw.coefs,
    )

    prob = np.asarray(sigmoid(linear_predictor(data.values, raw_fit.coefs)))
    residuals = pearson_residual(y, prob, lts_config.residual_variant)
    flags = (np.abs(residuals) >= lts_config.cutoff).astype(np.int8)
    weights = 1.0 - flags.astype(float)
    kept_per_class = [int(np.sum(weights[y == label])) for label in (0, 1)]
    fallback = min(kept_per_class) < MIN_PER_CLASS
    if fallback:
        # near-constant raw fits (lambda >= lambda_max) put a whole class beyond the cutoff
        logger.warning(
            "Reweighting keeps %d/%d rows of class 0/1; keeping the raw h-subset fit",
            *kept_per_class,
        )
        weights = h_weights
        reweighted = raw_fit
    else:
        reweighted = fit_enet_logistic(
            data,
            spec,
            replace(solver_config, standardization_mode=StandardizationMode.Robust).with_weights(
                weights
            ),
            init=raw_fit.coefs,
        )
    logger.info(
        "enet-LTS (alpha=%g, lambda=%g, h=%d): %d nonzero, %d outliers",
        spec.alpha, spec.lambda_, h, reweighted.coefs.n_nonzero, int(flags.sum()),
    )
    return RobustFitResult(
        raw_coefs=raw_fit.coefs,
        reweighted_coefs=reweighted.coefs,
        weights=weights,
        outlier_flags=flags,
        h_subset=raw.subset,
        pearson_residuals=residuals,
        spec=spec,
        h=h,
        raw_objective=raw.objective,
        raw_fit=raw_fit,
        reweighted_fit=reweighted,
        cutoff=lts_config.cutoff,
        csteps_traces=tuple(c.trace for c in kept),
        best_subsets=tuple(c.subset for c in kept),
        n_failed_subsets=n_failed,
        reweight_fallback=fallback,
    )


def predict_prob(coefs: Coefficients, new_data: Dataset) -> np.ndarray:
    return np.asarray(sigmoid(linear_predictor(new_data.values, coefs)))


def classify(prob: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(prob) > threshold).astype(np.int8)


def suggest_h_fraction(
    data: Dataset,
    spec: PenaltySpec,
    target: float = 0.85,
    initial: float = 0.55,
    lts_config: Optional[LtsConfig] = None,
    solver_config: Optional[SolverConfig] = None,
) -> float:
    """
    Run a conservative fit at `initial`, then raise h towards `target` while keeping it
    below the number of rows the reweighting step keeps.
    """
    config = replace(lts_config or LtsConfig(), h_fraction=initial)
    conservative = fit_enet_lts(data, spec, config, solver_config)
    kept = float(conservative.weights.sum()) / data.n
    fraction = max(initial, min(target, kept))
    logger.info("Conservative fit keeps %.3f of the rows; suggesting h = %.3f n", kept, fraction)
    return fraction


__all__ = [
    "LtsConfig",
    "HSplit",
    "RobustFitResult",
    "pearson_residual",
    "h_from_fraction",
    "h_lower_bound",
    "class_split",
    "c_step",
    "trimmed_objective",
    "least_outlying_subset",
    "fit_enet_lts",
    "predict_prob",
    "classify",
    "suggest_h_fraction",
]
