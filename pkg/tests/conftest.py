# Here exclusively to auto-modify pytest's python path
from typing import Tuple

import pytest

from robustlogit.definitions import Dataset
from robustlogit.synthetic import GroundTruth, SyntheticConfig, generate_synthetic


@pytest.fixture(scope="session")
def small_instance() -> Tuple[Dataset, GroundTruth]:
    return generate_synthetic(SyntheticConfig(n=120, p=8, sparsity=3, block_size=4, seed=3))


@pytest.fixture(scope="session")
def small_data(small_instance) -> Dataset:
    return small_instance[0]
