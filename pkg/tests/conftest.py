import numpy as np
import pytest

from dimerqpt.exciton import diagonalize, homodimer
from dimerqpt.process import porphyrin_model, propagate_chi

PHI = np.radians(65.0)

# one line per acceptance criterion, filled in by test_acceptance
CRITERIA_LINES = {}


@pytest.fixture(scope="session")
def porphyrin_eigen():
    return diagonalize(homodimer(16633.0, 175.0, PHI))


@pytest.fixture(scope="session")
def porphyrin():
    return porphyrin_model()


@pytest.fixture(scope="session")
def porphyrin_chi(porphyrin, porphyrin_eigen):
    times = 47.5 * np.array([0.5, 1.0, 1.5, 2.0, 4.5, 5.0])
    return propagate_chi(porphyrin, porphyrin_eigen, times)


def random_chi(rng, n_times=3):
    """Complex chi with every tracked entry random except the ground survival."""
    from dimerqpt.process import ProcessMatrix, TRACKED_COLUMNS

    v = np.zeros((n_times, 3, 3, 3, 3), dtype=complex)
    for c, d in TRACKED_COLUMNS:
        v[:, :, :, c, d] = rng.normal(size=(n_times, 3, 3)) + 1j * rng.normal(size=(n_times, 3, 3))
    v[:, 0, 0, 0, 0] = 1.0
    return ProcessMatrix(np.arange(1.0, n_times + 1), v)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA_LINES):
        terminalreporter.write_line(CRITERIA_LINES[key])
