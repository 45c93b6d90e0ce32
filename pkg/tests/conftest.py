import numpy as np
import pytest

from pemfc.params import ParameterSet
from pemfc.plant import Plant


@pytest.fixture(scope="session")
def params():
    return ParameterSet()


@pytest.fixture(scope="session")
def plant(params):
    return Plant(params)


def random_valid_states(plant, n, seed=0):
    """Interior states spread around the operating envelope."""
    rng = np.random.default_rng(seed)
    amb = plant.ambient_state()
    out = np.empty((n, 6))
    out[:, 0] = rng.uniform(1.0, 400.0, n)
    out[:, 1] = rng.uniform(0.9, 2.5, n) * amb[1]
    out[:, 2] = rng.uniform(0.8, 2.5, n) * amb[2]
    out[:, 3] = rng.uniform(0.1, 2.0, n) * amb[3]
    out[:, 4] = rng.uniform(0.8, 2.0, n) * amb[4]
    out[:, 5] = rng.uniform(0.95, 2.0, n) * amb[5]
    return out


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
