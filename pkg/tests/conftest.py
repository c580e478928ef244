import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gpselect import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_data():
    """Fixed 10-point dataset in [0,1]^2 with a linear + bumpy response."""
    r = np.random.default_rng(5)
    X = np.empty((10, 2))
    X[:, 0] = (r.permutation(10) + 0.5) / 10
    X[:, 1] = (r.permutation(10) + 0.5) / 10
    y = 1.0 + 2.0 * X[:, 0] + np.sin(3 * X[:, 1]) + r.normal(scale=0.05, size=10)
    return Dataset(X=X, y=y, column_names=["x1", "x2"])
