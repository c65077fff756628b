from typing import Optional

import numpy as np

from robustlogit.definitions import Dataset


def make_dataset(
    values: np.ndarray,
    response: Optional[np.ndarray] = None,
    allow_missing: bool = False,
) -> Dataset:
    values = np.asarray(values, dtype=float)
    n, p = values.shape
    return Dataset(
        values,
        tuple(f"c{j}" for j in range(p)),
        tuple(f"r{i}" for i in range(n)),
        response,
        allow_missing,
    )


def logistic_data(n: int, p: int, seed: int, signal: float = 1.0) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: min(3, p)] = signal
    prob = 1.0 / (1.0 + np.exp(-(x @ beta)))
    y = (rng.random(n) < prob).astype(int)
    y[:2] = (0, 1)
    return make_dataset(x, y)
