import numpy as np
import pytest

from zsposg.benchmarks import resolve_model


@pytest.fixture(scope="session")
def pennies():
    return resolve_model("matching_pennies")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
