import sys

import numpy as np
import pytest

from weighted_integrability import BenchmarkParams, benchmark_system


@pytest.fixture
def default_system():
    return benchmark_system(BenchmarkParams())


@pytest.fixture
def rotation_system():
    # alpha = eps = delta = 0: two decoupled unit rotations
    return benchmark_system(BenchmarkParams(epsilon=0.0, delta=0.0, alpha=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = sorted(getattr(module, "RESULTS", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
