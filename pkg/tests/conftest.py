import numpy as np
import pytest

from fanova_shapley.gp import Dataset, condition
from fanova_shapley.kernels import FeatureMeasure


def random_model(seed, d=None, n=None, Q=None, measure="empirical", noise=None):
    """Model with random data and random positive hyperparameters.

    ``Q`` may be an int or the string "d" for full interactions.
    """
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 7)) if d is None else d
    n = int(rng.integers(5, 25)) if n is None else n
    if Q is None:
        Q = int(rng.integers(1, d + 1))
    elif Q == "d":
        Q = d
    Q = min(Q, d)
    X = rng.standard_normal((n, d))
    y = np.sin(X @ rng.normal(size=d)) + 0.1 * rng.standard_normal(n)
    ls = rng.uniform(0.4, 2.5, size=d)
    ov = rng.uniform(0.1, 1.5, size=Q + 1)
    noise = rng.uniform(0.01, 0.3) if noise is None else noise
    meas = FeatureMeasure.standard_normal() if measure == "standard-normal" else None
    model = condition(Dataset(X, y), ls, ov, noise, measure=meas)
    return model, rng.standard_normal(d)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


@pytest.fixture
def small_model():
    return random_model(3, d=4, n=12, Q=3)
