import numpy as np
import pytest
from hypothesis import settings

from matsqrt.matcore import random_spd, random_symmetric

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def spd():
    """Well-conditioned covariance-style SPD matrix factory."""

    def make(n, seed=0, factor=4):
        return random_spd(n, seed, eps=1e-3, samples=factor * n)

    return make


@pytest.fixture
def sym():
    return random_symmetric


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
