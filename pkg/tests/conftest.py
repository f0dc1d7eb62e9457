import math

import numpy as np
import pytest

from roeguide.astro import Flavor, OrbitalElements, osc_to_mean

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def chief_osc():
    return OrbitalElements(7121e3, 0.0, 1e-5, 0.0, math.radians(45.0), 0.0, Flavor.OSCULATING)


@pytest.fixture(scope="session")
def chief_mean(chief_osc):
    return osc_to_mean(chief_osc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
