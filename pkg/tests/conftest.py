import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vesicleflow.energy import ModelParams
from vesicleflow.spectral import Grid

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def grid32():
    return Grid(2, 32)


@pytest.fixture
def grid64():
    return Grid(2, 64)


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
