"""Shared fixtures for the pybrach test suite."""

from types import SimpleNamespace

import numpy as np
import pytest

from pybrach.control.tvlqr import LqrWeights, linearize, riccati_backward
from pybrach.core.event_bus import get_event_bus
from pybrach.funnel.model import Funnel
from pybrach.funnel.synthesis import SynthesisProblem, SynthesisSettings
from pybrach.model.params import OUTPUT_INDICES, CableSpringModel, FullCableModel, RobotParams
from pybrach.model.trajectory import Trajectory
from pybrach.sim.plants import SpringPlant


@pytest.fixture
def robot():
    return RobotParams()


@pytest.fixture
def cable():
    return CableSpringModel()


@pytest.fixture
def full_cable():
    return FullCableModel()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def clean_event_bus():
    """Drop subscribers left behind by a test."""
    yield
    get_event_bus().clear()


@pytest.fixture
def funnel_factory():
    """Build funnels with a constant shape; levels default to 1 and gains to 0."""

    def make(times, shape, levels=None, controller=None, u_ref=None, limits=(-5.0, 5.0),
             outputs=(0,), uncertainty=None):
        times = np.asarray(times, dtype=float)
        shape = np.atleast_2d(np.asarray(shape, dtype=float))
        S = np.repeat(shape[None], len(times), axis=0)
        levels = np.ones(len(times)) if levels is None else levels
        if controller is None:
            controller = np.zeros((len(times), 1 + len(outputs)))
        u_ref = np.zeros(len(times)) if u_ref is None else u_ref
        return Funnel(times, S, np.zeros_like(S), levels, controller, u_ref, limits, uncertainty, outputs)

    return make


@pytest.fixture
def scalar_system():
    """Unstable x' = (1 + w) x + u held at the origin, with its TVLQR solution and synthesis problem."""

    def dynamics(x, u, w):
        return np.array([(1.0 + w) * x[0] + u])

    reference = Trajectory([0.0, 1.0], np.zeros((2, 1)), [0.0])
    settings = SynthesisSettings(n_samples=4, dynamics_degree=2, multiplier_degree=2, max_rounds=3)
    times = np.linspace(0.0, 1.0, settings.n_samples + 1)
    riccati = riccati_backward(linearize(lambda x, u: dynamics(x, u, 0.0), reference, times),
                               LqrWeights.diagonal([1.0], [1.0], 1.0))
    problem = SynthesisProblem.from_reference(dynamics, reference, riccati, (-5.0, 5.0), None,
                                              settings, (0,))
    return SimpleNamespace(dynamics=dynamics, reference=reference, settings=settings,
                           riccati=riccati, problem=problem)


@pytest.fixture
def hanging(robot, cable):
    """Robot at rest below its pivot on the spring cable, with a zero-gain funnel around that rest state."""
    plant = SpringPlant(robot, cable)
    rest = np.array([0.0, 0.0, plant.equilibrium(), 0.0, 0.0, 0.0])
    reference = Trajectory([0.0, 0.2], np.vstack([rest, rest]), [0.0])
    times = np.linspace(0.0, 0.2, 3)
    S = np.repeat(np.eye(6)[None], len(times), axis=0)
    funnel = Funnel(times, S, np.zeros_like(S), [4.0, 2.0, 1.0], np.zeros((len(times), 1 + len(OUTPUT_INDICES))),
                    np.zeros(len(times)), (-5.0, 5.0), None, OUTPUT_INDICES)
    return SimpleNamespace(plant=plant, rest=rest, reference=reference, funnel=funnel)
