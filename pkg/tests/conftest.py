import os
import sys

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("glfgp", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("glfgp")

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("filterwarnings", "ignore:.*quadrature weights below.*:RuntimeWarning")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.SUMMARY):
            terminalreporter.write_line(line)
