import numpy as np
import pytest

from yoda.rng import RngStream


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
