import sys

import numpy as np
import pytest

from pfm_lab.dashes import generate


@pytest.fixture(scope="session")
def dashes7():
    return generate(7, 1024)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
