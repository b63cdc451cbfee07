import numpy as np
import pytest

from rbfglobal import _kernels, problem


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: long-running end-to-end runs (acceptance suite)"
    )


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # pay the JIT compilation cost once, outside any timed assertions
    _kernels.warmup()


@pytest.fixture
def unit_spec():
    """3 continuous variables on the unit box."""
    return problem.continuous_spec(
        lambda p: float(np.sum(p)), [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]
    )


@pytest.fixture
def mixed_spec():
    """2 continuous + 1 integer + one 3-way categorical + one binary."""
    return problem.ProblemSpec(
        lower=np.array([0.0, -2.0, 1.0]),
        upper=np.array([1.0, 3.0, 5.0]),
        n_continuous=2,
        n_integer=1,
        categories=(("a", "b", "c"), ("x", "y")),
        objective=lambda p: float(np.sum(p)),
    )


@pytest.fixture
def cat_spec():
    """1 continuous + one 3-way categorical."""
    return problem.ProblemSpec(
        lower=np.array([0.0]),
        upper=np.array([1.0]),
        n_continuous=1,
        n_integer=0,
        categories=(("r", "g", "b"),),
        objective=lambda p: float(p[0] + p[1]),
    )
