import numpy as np
import pytest

from svradmm import problems


def make_classification(n, d, seed=0, unit_rows=True):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, d))
    if unit_rows:
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    w = rng.standard_normal(d)
    o = np.sign(Z @ w + 0.1 * rng.standard_normal(n))
    o[o == 0] = 1.0
    return problems.SampleSet(features=Z, labels=o, classification=True)


def make_regression(n, d, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, d))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    w = rng.standard_normal(d)
    o = Z @ w + 0.1 * rng.standard_normal(n)
    return problems.SampleSet(features=Z, labels=o)


@pytest.fixture
def small_lasso():
    data = make_classification(40, 6, seed=1)
    return problems.build_lasso(data, "logistic", 1e-3, l2_strength=1e-2)
