import numpy as np
import pytest

from singular_cs.integrator import StepControl, integrate
from singular_cs.model import ParticleSystem
from singular_cs.scenarios import scenario_config
from singular_cs.integrator import simulate
from singular_cs.weights import WeightKernel


def pair_state(w0: float, u0: float) -> ParticleSystem:
    """Two particles on a line with x2 - x1 = w0 and v2 - v1 = u0, centred at rest."""
    return ParticleSystem(0.0, [[-w0 / 2], [w0 / 2]], [[-u0 / 2], [u0 / 2]])


def run_pair(alpha: float, w0: float, u0: float, t_final: float, floor: float = 1e-10, ctrl: StepControl | None = None):
    return integrate(pair_state(w0, u0), WeightKernel.singular(alpha, floor), ctrl or StepControl(), t_final)


@pytest.fixture(scope="session")
def critical_run():
    return simulate(scenario_config("critical-pair"))


@pytest.fixture(scope="session")
def crossing_run():
    return simulate(scenario_config("crossing-pair"))


@pytest.fixture(scope="session")
def many_body_run():
    return simulate(scenario_config("many-body"))


@pytest.fixture(scope="session")
def flock_run():
    return simulate(scenario_config("flock-classic"))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
