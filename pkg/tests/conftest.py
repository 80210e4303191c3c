import numpy as np
import pytest
from scipy.special import logit

from binmisclass.model import ObservedDataset, ParameterSet

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_dataset(rng, n=60, px=1, pz=1):
    x = rng.normal(size=(n, px))
    z = np.abs(rng.normal(1.0, 1.0, size=(n, pz)))
    ystar = rng.integers(1, 3, size=n)
    return ObservedDataset.from_arrays(ystar, x, z)


def random_params(rng, px=1, pz=1, scale=2.0):
    return ParameterSet(rng.uniform(-scale, scale, px + 1),
                        rng.uniform(-scale, scale, pz + 1),
                        rng.uniform(-scale, scale, pz + 1))


def one_subject(ystar, pi1, sens, fpr):
    """Single intercept-only subject with the given probabilities."""
    data = ObservedDataset.from_arrays([ystar])
    params = ParameterSet([logit(pi1)], [logit(sens)], [logit(fpr)])
    return data, params


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def setting2_small():
    """A Setting 2 style dataset at n = 2000 with its truth."""
    from binmisclass.simulation import generate_dataset, preset

    sc = preset("setting2").replace(n=2000, seed=11)
    return generate_dataset(sc, 0), sc.truth
