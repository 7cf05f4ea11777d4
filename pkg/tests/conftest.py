import numpy as np
import pytest

from gcada.datamodel import synth_regression


@pytest.fixture(scope="session")
def small_dataset():
    # 240 samples keep per-test runs fast; divisible by 12, 6, 4, 3, 2
    return synth_regression(240, 8, 0.0, seed=11)


@pytest.fixture()
def rng0():
    return np.random.default_rng(0)
