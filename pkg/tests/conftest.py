import math
import sys

import numpy as np
import pytest

from avgspde.models import CosinePhi, benchmark_spec


@pytest.fixture
def bench():
    return benchmark_spec()


@pytest.fixture
def e1():
    x = np.zeros(8)
    x[0] = 1.0
    return x


@pytest.fixture
def phi_e1():
    return CosinePhi(np.eye(8)[0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


PI = math.pi


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
