"""
Classical elastic-net logistic regression.

Outer iteratively reweighted least squares (IRLS) with step halving; each quadratic
surrogate is solved by cyclic coordinate descent with soft-thresholding. The problem is
solved on standardized columns and the coefficients are reported on the original scale.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from robustlogit.definitions import (
    Coefficients,
    Dataset,
    PenaltySpec,
    ResidualVariant,
    StandardizationMode,
)
from robustlogit.errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    NumericalError,
    PenaltyError,
    warn_constant_columns,
)
from robustlogit.model import (
    DEFAULT_CUTOFF,
    deviance,
    pearson_residual,
    sigmoid,
)

logger = logging.getLogger(__name__)

WORKING_WEIGHT_FLOOR = 1e-5
LAMBDA_MAX_ALPHA_FLOOR = 1e-3
# relative headroom so the null fit at lambda_max survives rounding in the coordinate updates
LAMBDA_MAX_HEADROOM = 1e-6
COVARIANCE_MODE_MAX_P = 500
MAX_STEP_HALVINGS = 30
MAD_CONSISTENCY = 1.4826


@dataclass(frozen=True, eq=False)
class SolverConfig:
    max_outer_iters: int = 100
    max_inner_sweeps: int = 1000
    """ Convergence tolerance on the max absolute (standardized) coefficient change """
    coef_tol: float = 1e-7
    standardize: bool = True
    standardization_mode: StandardizationMode = StandardizationMode.Classical
    """ Optional observation weights in [0, 1]; rows with weight 0 do not enter the fit """
    weights: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters", self.max_outer_iters, "must be >= 1")
        if self.max_inner_sweeps < 1:
            raise ConfigError("max_inner_sweeps", self.max_inner_sweeps, "must be >= 1")
        if not self.coef_tol > 0.0:
            raise ConfigError("coef_tol", self.coef_tol, "must be > 0")
        object.__setattr__(
            self, "standardization_mode", StandardizationMode(self.standardization_mode)
        )
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).ravel()
            if not np.isfinite(w).all() or w.min() < 0.0 or w.max() > 1.0:
                raise ConfigError("weights", "...", "must lie in [0, 1]")
            if not w.sum() > 0.0:
                raise ConfigError("weights", "...", "must have a positive sum")
            w.flags.writeable = False
            object.__setattr__(self, "weights", w)

    def resolve_weights(self, n: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(n)
        if self.weights.shape[0] != n:
            raise DimensionMismatchError("Weights", self.weights.shape[0], n)
        return np.asarray(self.weights)

    def with_weights(self, weights: Optional[np.ndarray]) -> SolverConfig:
        return SolverConfig(
            self.max_outer_iters,
            self.max_inner_sweeps,
            self.coef_tol,
            self.standardize,
            self.standardization_mode,
            weights,
        )


@dataclass(frozen=True, eq=False)
class Standardization:
    """
    Column centres and scales; a scale of 0 marks a column that is constant on the fitted rows.
    """

    center: np.ndarray
    scale: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return np.asarray(self.scale == 0.0)

    def apply(self, values: np.ndarray) -> np.ndarray:
        safe = np.where(self.constant, 1.0, self.scale)
        scaled = (values - self.center) / safe
        scaled[:, self.constant] = 0.0
        return np.asarray(scaled)

    def to_standardized(self, coefs: Coefficients) -> Tuple[float, np.ndarray]:
        gamma = np.where(self.constant, 0.0, coefs.beta * self.scale)
        intercept = coefs.intercept + float(self.center @ coefs.beta)
        return intercept, gamma

    def to_original(self, intercept: float, gamma: np.ndarray) -> Coefficients:
        safe = np.where(self.constant, 1.0, self.scale)
        beta = np.where(self.constant, 0.0, gamma / safe)
        return Coefficients(intercept - float(self.center @ beta), beta)


def standardize_columns(
    values: np.ndarray,
    weights: np.ndarray,
    mode: StandardizationMode = StandardizationMode.Classical,
    scale: bool = True,
) -> Standardization:
    """
    Centre/scale from the positive-weight rows: weighted mean/SD (classical) or median/MAD (robust).

    A robust scale of 0 on a non-constant column falls back to the classical SD.
    Without scaling, columns are still centred; the unpenalized intercept absorbs the shift.
    """
    active = weights > 0
    x = values[active]
    w = weights[active]
    constant = np.ptp(x, axis=0) == 0.0
    mean = (w @ x) / w.sum()
    sd = np.sqrt((w @ (x - mean) ** 2) / w.sum())
    if StandardizationMode(mode) is StandardizationMode.Robust:
        center = np.median(x, axis=0)
        spread = MAD_CONSISTENCY * np.median(np.abs(x - center), axis=0)
        spread = np.where(spread > 0.0, spread, sd)
    else:
        center, spread = mean, sd
    if not scale:
        spread = np.ones_like(spread)
    spread = np.where(constant, 0.0, spread)
    return Standardization(np.asarray(center, dtype=float), np.asarray(spread, dtype=float))


def _soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


class _CovarianceSurrogate:
    """
    Quadratic surrogate held through its weighted Gram matrix; updates cost O(p).
    """

    def __init__(self, xc: np.ndarray, u: np.ndarray, zc: np.ndarray, gamma: np.ndarray):
        weighted = xc * u[:, None]
        self.gram = weighted.T @ xc
        self.target = weighted.T @ zc
        self.fitted = self.gram @ gamma

    def curvature(self, j: int) -> float:
        return float(self.gram[j, j])

    def partial(self, j: int, gamma_j: float) -> float:
        return float(self.target[j] - self.fitted[j]) + self.curvature(j) * gamma_j

    def move(self, j: int, delta: float) -> None:
        self.fitted += self.gram[:, j] * delta


class _NaiveSurrogate:
    """
    Quadratic surrogate held through the working residual; updates cost O(n).
    """

    def __init__(self, xc: np.ndarray, u: np.ndarray, zc: np.ndarray, gamma: np.ndarray):
        self.xc = xc
        self.u = u
        self.residual = zc - xc @ gamma
        self.curv = u @ (xc * xc)

    def curvature(self, j: int) -> float:
        return float(self.curv[j])

    def partial(self, j: int, gamma_j: float) -> float:
        return float(self.xc[:, j] @ (self.u * self.residual)) + self.curvature(j) * gamma_j

    def move(self, j: int, delta: float) -> None:
        self.residual -= self.xc[:, j] * delta


_Surrogate = Union[_CovarianceSurrogate, _NaiveSurrogate]


def _sweep(
    surrogate: _Surrogate,
    gamma: np.ndarray,
    columns: np.ndarray,
    thresholds: np.ndarray,
    ridge: np.ndarray,
) -> float:
    largest = 0.0
    for j in columns.tolist():
        curvature = surrogate.curvature(j)
        denom = curvature + ridge[j]
        if denom <= 1e-12:
            new = 0.0
        else:
            grad = surrogate.partial(j, gamma[j])
            new = _soft_threshold(grad, thresholds[j]) / denom
        delta = new - gamma[j]
        if delta != 0.0:
            surrogate.move(j, delta)
            gamma[j] = new
            largest = max(largest, abs(delta))
    return largest


def _solve_surrogate(
    xs: np.ndarray,
    u: np.ndarray,
    z: np.ndarray,
    gamma: np.ndarray,
    free: np.ndarray,
    thresholds: np.ndarray,
    ridge: np.ndarray,
    config: SolverConfig,
) -> Tuple[float, np.ndarray, int]:
    """
    Minimise 1/2 sum u (z - g0 - xs g)^2 + penalty by coordinate descent, alternating full
    sweeps with sweeps restricted to the active set.
    """
    total = u.sum()
    x_bar = (u @ xs) / total
    z_bar = float(u @ z) / total
    xc = xs - x_bar
    zc = z - z_bar
    gamma = gamma.copy()
    surrogate: _Surrogate
    if xs.shape[1] <= COVARIANCE_MODE_MAX_P:
        surrogate = _CovarianceSurrogate(xc, u, zc, gamma)
    else:
        surrogate = _NaiveSurrogate(xc, u, zc, gamma)

    sweeps = 0
    while sweeps < config.max_inner_sweeps:
        change = _sweep(surrogate, gamma, free, thresholds, ridge)
        sweeps += 1
        if change < config.coef_tol:
            break
        while sweeps < config.max_inner_sweeps:
            active = free[gamma[free] != 0.0]
            change = _sweep(surrogate, gamma, active, thresholds, ridge)
            sweeps += 1
            if change < config.coef_tol:
                break
    intercept = z_bar - float(x_bar @ gamma)
    return intercept, gamma, sweeps


@dataclass(frozen=True, eq=False)
class FitResult:
    coefs: Coefficients
    spec: PenaltySpec
    deviance_total: float
    per_obs_deviance: np.ndarray
    fitted_prob: np.ndarray
    converged: bool
    iters_used: int
    response: np.ndarray
    weights: np.ndarray
    standardization: Standardization
    """ Penalized (weighted) objective after every outer iteration, starting with the initial point """
    objective_path: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def objective(self) -> float:
        return self.objective_path[-1]

    @property
    def n_eff(self) -> float:
        return float(self.weights.sum())


def _penalty(
    gamma: np.ndarray, factors: np.ndarray, spec: PenaltySpec, n_eff: float
) -> float:
    scaled = factors * gamma
    ridge = 0.5 * float(scaled @ scaled)
    lasso = float(np.abs(scaled).sum())
    return n_eff * spec.lambda_ * ((1.0 - spec.alpha) * ridge + spec.alpha * lasso)


def fit_enet_logistic(
    data: Dataset,
    spec: PenaltySpec,
    config: Optional[SolverConfig] = None,
    *,
    init: Optional[Coefficients] = None,
    standardization: Optional[Standardization] = None,
) -> FitResult:
    """
    Minimise sum_i w_i d(x_i, y_i; beta) + n_w * lambda * [(1 - alpha) ||p . beta||^2 / 2 + alpha ||p . beta||_1].

    :param init: warm start (original scale); defaults to the intercept-only model.
    :param standardization: fixed centre/scale to use instead of computing one from the weighted rows.
    """
    config = config or SolverConfig()
    weights = config.resolve_weights(data.n)
    y = data.require_both_classes(weights)
    factors = spec.factors(data.p)
    if data.p < 1:
        raise DataError("At least one predictor is required")
    if standardization is None:
        standardization = standardize_columns(
            data.values, weights, config.standardization_mode, config.standardize
        )
    elif standardization.center.shape[0] != data.p:
        raise DimensionMismatchError("Standardization", standardization.center.shape[0], data.p)

    constant = standardization.constant
    if (constant & (factors == 0.0)).any():
        name = data.col_names[int(np.flatnonzero(constant & (factors == 0.0))[0])]
        raise DataError("Unpenalized column is constant", column=name)
    if constant.any():
        warn_constant_columns([data.col_names[j] for j in np.flatnonzero(constant)])
    free = np.flatnonzero(~constant)

    active_rows = weights > 0
    w = weights[active_rows]
    ya = y[active_rows].astype(float)
    xs = standardization.apply(data.values[active_rows])
    n_eff = float(w.sum())
    thresholds = n_eff * spec.lambda_ * spec.alpha * factors
    ridge = n_eff * spec.lambda_ * (1.0 - spec.alpha) * factors**2

    if init is None:
        y_bar = float(w @ ya) / n_eff
        intercept, gamma = float(np.log(y_bar / (1.0 - y_bar))), np.zeros(data.p)
    else:
        if init.p != data.p:
            raise DimensionMismatchError("Initial Coefficients", init.p, data.p)
        intercept, gamma = standardization.to_standardized(init)

    def objective(g0: float, g: np.ndarray) -> Tuple[float, np.ndarray]:
        eta = g0 + xs @ g
        value = float(w @ np.asarray(deviance(eta, ya))) + _penalty(g, factors, spec, n_eff)
        return value, eta

    current, eta = objective(intercept, gamma)
    path: List[float] = [current]
    converged = False
    iters = 0
    for iters in range(1, config.max_outer_iters + 1):
        prob = np.asarray(sigmoid(eta))
        working = np.maximum(prob * (1.0 - prob), WORKING_WEIGHT_FLOOR)
        z = eta + (ya - prob) / working
        new_intercept, new_gamma, sweeps = _solve_surrogate(
            xs, w * working, z, gamma, free, thresholds, ridge, config
        )
        candidate, new_eta = objective(new_intercept, new_gamma)
        halvings = 0
        while candidate > current and halvings < MAX_STEP_HALVINGS:
            new_intercept = 0.5 * (new_intercept + intercept)
            new_gamma = 0.5 * (new_gamma + gamma)
            candidate, new_eta = objective(new_intercept, new_gamma)
            halvings += 1
        if not np.isfinite(candidate):
            raise NumericalError(f"Objective became non-finite at outer iteration {iters}")
        if candidate > current:
            # no descent left along the Newton direction; stationary to working precision
            logger.debug("Step halving exhausted at iteration %d; keeping iterate", iters)
            converged = True
            path.append(current)
            break
        change = max(abs(new_intercept - intercept), float(np.max(np.abs(new_gamma - gamma), initial=0.0)))
        intercept, gamma, eta, current = new_intercept, new_gamma, new_eta, candidate
        path.append(current)
        logger.debug(
            "IRLS %d: objective=%.10g change=%.3g sweeps=%d halvings=%d",
            iters, current, change, sweeps, halvings,
        )
        if change < config.coef_tol:
            converged = True
            break

    if not converged:
        logger.warning(
            "Elastic-net fit did not converge in %d outer iterations (alpha=%g, lambda=%g)",
            config.max_outer_iters, spec.alpha, spec.lambda_,
        )
    coefs = standardization.to_original(intercept, gamma)
    eta_all = coefs.intercept + data.values @ coefs.beta
    per_obs = np.asarray(deviance(eta_all, y))
    return FitResult(
        coefs=coefs,
        spec=spec,
        deviance_total=float(per_obs.sum()),
        per_obs_deviance=per_obs,
        fitted_prob=np.asarray(sigmoid(eta_all)),
        converged=converged,
        iters_used=iters,
        response=y,
        weights=weights,
        standardization=standardization,
        objective_path=tuple(path),
    )


def lambda_max(
    data: Dataset,
    alpha: float,
    penalty_factors: Optional[Tuple[float, ...]] = None,
    config: Optional[SolverConfig] = None,
) -> float:
    """
    Smallest lambda at which every penalized coefficient is zero.

    Columns with penalty factor 0 are partialled out first through an unpenalized fit;
    alpha = 0 is evaluated with alpha = 0.001.
    """
    config = config or SolverConfig()
    weights = config.resolve_weights(data.n)
    y = data.require_both_classes(weights).astype(float)
    factors = PenaltySpec(max(alpha, 0.0), 0.0, penalty_factors).factors(data.p)
    std = standardize_columns(data.values, weights, config.standardization_mode, config.standardize)
    penalized = (factors > 0.0) & ~std.constant
    if not penalized.any():
        raise PenaltyError()

    unpenalized = np.flatnonzero(factors == 0.0)
    if unpenalized.size:
        names = [data.col_names[j] for j in unpenalized]
        null_fit = fit_enet_logistic(
            data.select_columns(names),
            PenaltySpec(1.0, 0.0, tuple(0.0 for _ in names)),
            config,
        )
        prob = null_fit.fitted_prob
    else:
        prob = np.full(data.n, float(weights @ y) / weights.sum())

    active = weights > 0
    xs = std.apply(data.values[active])
    grad = np.abs(xs.T @ (weights[active] * (y[active] - prob[active])))
    effective_alpha = max(alpha, LAMBDA_MAX_ALPHA_FLOOR)
    ratios = grad[penalized] / (weights.sum() * effective_alpha * factors[penalized])
    value = float(ratios.max()) * (1.0 + LAMBDA_MAX_HEADROOM)
    return max(value, float(np.finfo(float).tiny))


def lambda_grid(
    data: Dataset,
    alpha: float,
    penalty_factors: Optional[Tuple[float, ...]] = None,
    n_lambda: int = 40,
    ratio: float = 0.01,
    config: Optional[SolverConfig] = None,
) -> np.ndarray:
    if n_lambda < 2:
        raise ConfigError("n_lambda", n_lambda, "must be >= 2")
    if not 0.0 < ratio < 1.0:
        raise ConfigError("ratio", ratio, "must lie in (0, 1)")
    top = lambda_max(data, alpha, penalty_factors, config)
    return np.asarray(top * ratio ** (np.arange(n_lambda) / (n_lambda - 1)))


def flag_outliers_classical(
    fit: FitResult,
    cutoff: float = DEFAULT_CUTOFF,
    variant: ResidualVariant = ResidualVariant.AsPrinted,
) -> np.ndarray:
    """
    Apply the reweighting criterion to a classical fit: flag = 1 iff |residual| >= cutoff.
    """
    residuals = pearson_residual(fit.response, fit.fitted_prob, variant)
    return (np.abs(residuals) >= cutoff).astype(np.int8)


def kkt_violations(data: Dataset, fit: FitResult) -> np.ndarray:
    """
    Stationarity violations on the scale the solver optimised.

    Element 0 is the intercept gradient; element j + 1 belongs to coefficient j.
    """
    spec = fit.spec
    factors = spec.factors(data.p)
    active = fit.weights > 0
    w = fit.weights[active]
    n_eff = float(w.sum())
    xs = fit.standardization.apply(data.values[active])
    _, gamma = fit.standardization.to_standardized(fit.coefs)
    residual = w * (fit.fitted_prob[active] - fit.response[active])
    grad = xs.T @ residual
    l1 = n_eff * spec.lambda_ * spec.alpha * factors
    l2 = n_eff * spec.lambda_ * (1.0 - spec.alpha) * factors**2
    nonzero = gamma != 0.0
    smooth = grad + l2 * gamma
    violations = np.where(
        nonzero,
        np.abs(smooth + l1 * np.sign(gamma)),
        np.maximum(np.abs(grad) - l1, 0.0),
    )
    violations[fit.standardization.constant] = 0.0
    return np.concatenate(([abs(float(residual.sum()))], violations))


__all__ = [
    "WORKING_WEIGHT_FLOOR",
    "SolverConfig",
    "Standardization",
    "standardize_columns",
    "FitResult",
    "fit_enet_logistic",
    "lambda_max",
    "lambda_grid",
    "flag_outliers_classical",
    "kkt_violations",
]
