import functools

import numpy as np
import pytest

from floqsens.floquet import model_library, quasienergies
from floqsens.opspace import PhaseGrid


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def spectrum(name: str, m: int, steps: int = 2000):
    return quasienergies(model_library(name), PhaseGrid(m), steps)


@pytest.fixture(scope="session")
def spectra():
    return spectrum


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
