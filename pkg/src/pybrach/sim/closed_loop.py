"""
Closed Loop - Run a funnel controller (or plain TVLQR) against a plant.

The torque is computed once per sampling interval and held (zero-order hold),
optionally clipped to the funnel's torque limits. Containment is checked at the
funnel sample times.
"""

from dataclasses import dataclass
import logging
from typing import Optional

import numpy as np

from ..control.tvlqr import RiccatiSolution
from ..core.errors import ConfigError
from ..funnel.model import Funnel, funnel_contains
from ..model.integrate import integrate
from ..model.params import State
from ..model.trajectory import Trajectory
from .plants import Plant

logger = logging.getLogger(__name__)

CONTROLLERS = ("sos", "tvlqr")


@dataclass(frozen=True)
class SimulationSettings:
    dt: float = 1e-3
    saturate: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("simulation dt must be positive")


@dataclass(frozen=True)
class ClosedLoopResult:
    """
    Outcome of one closed-loop run.

    ``trajectory`` holds the robot coordinates only; ``plant_state`` is the
    full final plant state (cable nodes included) for chaining swings.
    """

    trajectory: Trajectory
    margins: np.ndarray
    max_abs_torque: float
    reached_goal: bool
    plant_state: np.ndarray

    @property
    def contained(self) -> np.ndarray:
        return self.margins >= 0.0

    @property
    def always_contained(self) -> bool:
        return bool(np.all(self.contained))

    @property
    def final_state(self) -> State:
        return State.from_vector(self.trajectory.final_state)


def _control_law(plant: Plant, funnel: Funnel, reference: Trajectory, settings: SimulationSettings,
                 controller: str, riccati: Optional[RiccatiSolution]):
    u_min, u_max = funnel.limits

    def law(t: float, x: np.ndarray) -> float:
        xbar = plant.robot_state(x) - reference.state_at(t)
        if controller == "sos":
            u = reference.input_at(t) + funnel.feedback(t, xbar)
        else:
            u = reference.input_at(t) - float(riccati.gain_at(t)[0] @ xbar)
        return float(np.clip(u, u_min, u_max)) if settings.saturate else u

    return law


def simulate_closed_loop(plant: Plant, funnel: Funnel, reference: Trajectory, x0,
                         settings: SimulationSettings = SimulationSettings(),
                         controller: str = "sos",
                         riccati: Optional[RiccatiSolution] = None) -> ClosedLoopResult:
    """
    Simulate a plant under the funnel's controller over the reference horizon.

    Args:
        plant: Plant to integrate
        funnel: Certified funnel (supplies the law, the limits and the containment test)
        reference: Reference trajectory the funnel was built around
        x0: Initial robot state (6 values) or full plant state
        settings: Sampling interval and saturation
        controller: "sos" for the certified output feedback, "tvlqr" for full-state TVLQR
        riccati: Riccati solution, required for the TVLQR law

    Raises:
        ConfigError: For an unknown controller or a missing Riccati solution
        DivergenceError: If the plant state becomes non-finite
    """
    if controller not in CONTROLLERS:
        raise ConfigError(f"unknown controller {controller!r}; expected one of {CONTROLLERS}")
    if controller == "tvlqr" and riccati is None:
        raise ConfigError("the TVLQR controller needs a Riccati solution")
    x = np.asarray(x0, dtype=float)
    if x.size == 6:
        x = plant.embed(x)
    law = _control_law(plant, funnel, reference, settings, controller, riccati)
    raw = integrate(plant.dynamics, x, law, reference.t0, reference.tf, settings.dt,
                    substeps=plant.substeps(settings.dt))
    robot = Trajectory(raw.times, raw.robot_states(), raw.inputs)

    margins = np.array([funnel_contains(funnel, robot.state_at(t) - reference.state_at(t), t)[1]
                        for t in funnel.times])
    reached = funnel.goal.contains(robot.final_state - reference.final_state)
    max_torque = float(np.abs(raw.inputs[:-1]).max()) if len(raw.inputs) > 1 else 0.0
    logger.info("%s closed loop on %s plant: min margin %.3g, goal %s, max |u| %.3f",
                controller, plant.name, margins.min(), "reached" if reached else "missed", max_torque)
    return ClosedLoopResult(robot, margins, max_torque, reached, raw.states[-1].copy())
