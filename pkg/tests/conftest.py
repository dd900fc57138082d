import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "slow: long-running acceptance protocol (training runs, latency bench); "
        "deselect with -m 'not slow' for a quick pass")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
