import os

import numpy as np
import pytest

from resphase.model import example_system


def pytest_addoption(parser):
    parser.addoption("--full-sweep", action="store_true", default=False,
                     help="run the complete eps = 0.001 * 0.5**k, k = 1..10 table (about an hour)")


def full_sweep_enabled(config) -> bool:
    return config.getoption("--full-sweep") or os.environ.get("RESPHASE_FULL_SWEEP") == "1"


@pytest.fixture(scope="session")
def example():
    return example_system()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
