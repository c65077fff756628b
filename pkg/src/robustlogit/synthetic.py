"""
Seeded synthetic instances: block-correlated Gaussian predictors, a sparse logistic response
and recorded contamination (label flips, leverage rows, cellwise outliers).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from robustlogit.definitions import Dataset
from robustlogit.errors import ConfigError
from robustlogit.model import sigmoid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 300
    p: int = 30
    """ Size of the true support """
    sparsity: int = 5
    signal: float = 1.5
    """ Target share of class 1, through the intercept """
    class_balance: float = 0.5
    block_size: int = 5
    block_rho: float = 0.5
    """ When set, class-1 rows redraw their off-support columns with this block correlation """
    class1_block_rho: Optional[float] = None
    label_flip_rate: float = 0.0
    leverage_rate: float = 0.0
    leverage_scale: float = 4.0
    """ Flip labels on leverage rows first """
    flip_on_leverage: bool = False
    cell_outlier_rate: float = 0.0
    cell_outlier_size: float = 6.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ConfigError("n", self.n, "must be >= 2")
        if self.p < 1:
            raise ConfigError("p", self.p, "must be >= 1")
        if not 0 <= self.sparsity <= self.p:
            raise ConfigError("sparsity", self.sparsity, f"must lie in [0, p={self.p}]")
        if not 0.0 < self.class_balance < 1.0:
            raise ConfigError("class_balance", self.class_balance, "must lie in (0, 1)")
        if self.block_size < 1:
            raise ConfigError("block_size", self.block_size, "must be >= 1")
        for name in ("block_rho", "label_flip_rate", "leverage_rate", "cell_outlier_rate"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(name, value, "must lie in [0, 1)")
        if self.class1_block_rho is not None and not 0.0 <= self.class1_block_rho < 1.0:
            raise ConfigError("class1_block_rho", self.class1_block_rho, "must lie in [0, 1)")
        if not self.leverage_scale > 0.0:
            raise ConfigError("leverage_scale", self.leverage_scale, "must be > 0")


def contamination_count(rate: float, total: int) -> int:
    """ round(rate * total), halves rounding up """
    return int(math.floor(rate * total + 0.5))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    intercept: float
    beta: np.ndarray
    support: Tuple[int, ...]
    clean_response: np.ndarray
    flipped_rows: Tuple[int, ...] = ()
    leverage_rows: Tuple[int, ...] = ()
    """ (row, column) of every shifted cell, row-major order """
    cell_outliers: Tuple[Tuple[int, int], ...] = ()
    cell_signs: Tuple[int, ...] = ()
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "intercept": self.intercept,
            "beta": self.beta.tolist(),
            "support": list(self.support),
            "flipped_rows": list(self.flipped_rows),
            "leverage_rows": list(self.leverage_rows),
            "cell_outliers": [list(c) for c in self.cell_outliers],
            "cell_signs": list(self.cell_signs),
            "clean_response": self.clean_response.astype(int).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _block_gaussian(
    rng: np.random.Generator, n: int, p: int, block_size: int, rho: float
) -> np.ndarray:
    """ Unit-variance columns, correlation rho within each block of `block_size` consecutive columns """
    x = np.empty((n, p))
    for start in range(0, p, block_size):
        stop = min(start + block_size, p)
        common = rng.standard_normal((n, 1))
        own = rng.standard_normal((n, stop - start))
        x[:, start:stop] = math.sqrt(rho) * common + math.sqrt(1.0 - rho) * own
    return x


def _choose(rng: np.random.Generator, pool: np.ndarray, count: int) -> np.ndarray:
    return np.sort(rng.choice(pool, size=count, replace=False)) if count else np.zeros(0, dtype=int)


def generate_synthetic(config: Optional[SyntheticConfig] = None) -> Tuple[Dataset, GroundTruth]:
    config = config or SyntheticConfig()
    rng = np.random.default_rng(config.seed)
    n, p = config.n, config.p

    x = _block_gaussian(rng, n, p, config.block_size, config.block_rho)
    support = _choose(rng, np.arange(p), config.sparsity)
    beta = np.zeros(p)
    beta[support] = config.signal * rng.choice((-1.0, 1.0), size=support.shape[0])
    intercept = float(math.log(config.class_balance / (1.0 - config.class_balance)))

    leverage = _choose(rng, np.arange(n), contamination_count(config.leverage_rate, n))
    x[leverage] *= config.leverage_scale

    prob = np.asarray(sigmoid(intercept + x @ beta))
    clean_y = (rng.random(n) < prob).astype(np.int8)

    if config.class1_block_rho is not None:
        rows = np.flatnonzero(clean_y == 1)
        off = np.setdiff1d(np.arange(p), support)
        if rows.size and off.size:
            redraw = _block_gaussian(
                rng, rows.shape[0], off.shape[0], config.block_size, config.class1_block_rho
            )
            x[np.ix_(rows, off)] = redraw

    n_flips = contamination_count(config.label_flip_rate, n)
    if config.flip_on_leverage and leverage.shape[0] >= n_flips:
        flipped = _choose(rng, leverage, n_flips)
    elif config.flip_on_leverage:
        others = np.setdiff1d(np.arange(n), leverage)
        flipped = np.union1d(leverage, _choose(rng, others, n_flips - leverage.shape[0]))
    else:
        flipped = _choose(rng, np.arange(n), n_flips)
    y = clean_y.copy()
    y[flipped] = 1 - y[flipped]

    n_cells = contamination_count(config.cell_outlier_rate, n * p)
    cells = _choose(rng, np.arange(n * p), n_cells)
    signs = rng.choice((-1, 1), size=cells.shape[0])
    rows, cols = np.divmod(cells, p)
    x[rows, cols] += signs * config.cell_outlier_size

    width = len(str(max(n, p)))
    data = Dataset(
        x,
        tuple(f"x{j + 1:0{width}d}" for j in range(p)),
        tuple(f"s{i + 1:0{width}d}" for i in range(n)),
        y,
    )
    truth = GroundTruth(
        intercept=intercept,
        beta=beta,
        support=tuple(support.tolist()),
        clean_response=clean_y,
        flipped_rows=tuple(flipped.tolist()),
        leverage_rows=tuple(leverage.tolist()),
        cell_outliers=tuple(zip(rows.tolist(), cols.tolist())),
        cell_signs=tuple(int(s) for s in signs),
        config=asdict(config),
    )
    logger.info(
        "Synthetic instance n=%d p=%d: %d flips, %d leverage rows, %d shifted cells",
        n, p, len(truth.flipped_rows), len(truth.leverage_rows), len(truth.cell_outliers),
    )
    return data, truth


__all__ = [
    "SyntheticConfig",
    "GroundTruth",
    "contamination_count",
    "generate_synthetic",
]
