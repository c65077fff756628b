"""
Logistic link and deviance primitives shared by every estimator.

The stabilised forms branch at eta = 0: for eta >= 0 the sigmoid is 1 / (1 + exp(-eta)),
otherwise exp(eta) / (1 + exp(eta)); both only ever exponentiate a non-positive number.
"""
from __future__ import annotations

from typing import Union, overload

import numpy as np
from numpy.typing import ArrayLike
from scipy.stats import norm

from robustlogit.definitions import (
    Coefficients,
    Dataset,
    PenaltySpec,
    ResidualVariant,
)
from robustlogit.errors import DimensionMismatchError


@overload
def sigmoid(eta: float) -> float:
    ...


@overload
def sigmoid(eta: np.ndarray) -> np.ndarray:
    ...


def sigmoid(eta: Union[float, ArrayLike]) -> Union[float, np.ndarray]:
    arr = np.asarray(eta, dtype=float)
    z = np.exp(-np.abs(arr))
    result = np.where(arr >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))
    if result.ndim == 0:
        return float(result)
    return result


@overload
def deviance(eta: float, y: float) -> float:
    ...


@overload
def deviance(eta: np.ndarray, y: ArrayLike) -> np.ndarray:
    ...


def deviance(eta: Union[float, ArrayLike], y: Union[float, ArrayLike]) -> Union[float, np.ndarray]:
    """
    log(1 + exp(eta)) - y * eta, evaluated as softplus((1 - 2y) * eta) for y in {0, 1}.
    """
    arr = np.asarray(eta, dtype=float)
    signed = (1.0 - 2.0 * np.asarray(y, dtype=float)) * arr
    result = np.logaddexp(0.0, signed)
    if result.ndim == 0:
        return float(result)
    return result


def deviance_gradient(eta: ArrayLike, y: ArrayLike) -> np.ndarray:
    return np.asarray(sigmoid(np.asarray(eta, dtype=float))) - np.asarray(y, dtype=float)


def linear_predictor(values: np.ndarray, coefs: Coefficients) -> np.ndarray:
    if values.shape[1] != coefs.p:
        raise DimensionMismatchError("Coefficients", coefs.p, values.shape[1])
    return coefs.intercept + values @ coefs.beta


def observation_deviances(data: Dataset, coefs: Coefficients) -> np.ndarray:
    y = data.require_response()
    return np.asarray(deviance(linear_predictor(data.values, coefs), y))


def total_deviance(data: Dataset, coefs: Coefficients) -> float:
    return float(observation_deviances(data, coefs).sum())


def penalty_value(spec: PenaltySpec, beta: ArrayLike, n_eff: float) -> float:
    """
    n_eff * lambda * [(1 - alpha) * ||p . beta||^2 / 2 + alpha * ||p . beta||_1]; the intercept is never part of `beta`.
    """
    b = np.asarray(beta, dtype=float).ravel()
    scaled = spec.factors(b.shape[0]) * b
    ridge = 0.5 * float(scaled @ scaled)
    lasso = float(np.abs(scaled).sum())
    return float(n_eff * spec.lambda_ * ((1.0 - spec.alpha) * ridge + spec.alpha * lasso))


PROBABILITY_CLAMP = 1e-10
""" Phi^-1(0.975), the reweighting cutoff (95% of a standard Gaussian lies within +-c) """
DEFAULT_CUTOFF: float = float(norm.ppf(0.975))


def pearson_residual(
    y: ArrayLike, pi: ArrayLike, variant: ResidualVariant = ResidualVariant.AsPrinted
) -> np.ndarray:
    """
    Residuals used by the reweighting step.

    `AsPrinted` divides by pi * (1 - pi); `Sqrt` divides by its square root (the textbook
    Pearson residual). Probabilities are clamped to [1e-10, 1 - 1e-10] first.
    """
    prob = np.clip(np.asarray(pi, dtype=float), PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    variance = prob * (1.0 - prob)
    raw = np.asarray(y, dtype=float) - prob
    if ResidualVariant(variant) is ResidualVariant.Sqrt:
        return np.asarray(raw / np.sqrt(variance))
    return np.asarray(raw / variance)


__all__ = [
    "PROBABILITY_CLAMP",
    "DEFAULT_CUTOFF",
    "pearson_residual",
    "sigmoid",
    "deviance",
    "deviance_gradient",
    "linear_predictor",
    "observation_deviances",
    "total_deviance",
    "penalty_value",
]
