import sys

import pytest
from hypothesis import settings

from gwi2.laws import preset

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def model_a():
    return preset("modelA")


@pytest.fixture(scope="session")
def model_c():
    return preset("modelC")


@pytest.fixture(scope="session")
def model_d():
    return preset("modelD")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
