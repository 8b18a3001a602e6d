"""
Plants - Simulation models the controllers are run against.

A plant owns its state layout: the spring plant integrates the six robot
coordinates, the full-cable plant carries the cable nodes as well. Both expose
the robot coordinates, the paused dynamics (joints locked, both grippers on the
cable) and the grip exchange that moves the pivot to the free gripper.
"""

from dataclasses import dataclass, replace
import logging
import math
from typing import Protocol, Tuple

import numpy as np

from ..core.errors import ConfigError
from ..model.brachiator import dynamics_spring, gripper_position, spring_force
from ..model.full_cable import dynamics_fullcable, extended_state, split_state
from ..model.params import CableSpringModel, FullCableModel, RobotParams
from ..sysid.output_error import FULL_CABLE_MAX_STEP

logger = logging.getLogger(__name__)


def grip_exchange(robot_state, zg: float, dzg: float = 0.0) -> np.ndarray:
    """
    Robot state after the free gripper becomes the pivot.

    The chain is re-rooted at the other end: theta1 -> theta1 + theta2 - pi,
    theta2 -> -theta2. Joint rates are zero (both grippers hold the cable during
    the pause) and the pivot takes the given height and rate.
    """
    th1, th2 = float(robot_state[0]), float(robot_state[1])
    return np.array([th1 + th2 - math.pi, -th2, zg, 0.0, 0.0, dzg])


class Plant(Protocol):
    name: str

    def dynamics(self, x: np.ndarray, u: float) -> np.ndarray: ...

    def hold_dynamics(self, x: np.ndarray) -> np.ndarray: ...

    def embed(self, robot_state) -> np.ndarray: ...

    def robot_state(self, x: np.ndarray) -> np.ndarray: ...

    def exchange(self, x: np.ndarray) -> Tuple["Plant", np.ndarray]: ...

    def substeps(self, dt: float) -> int: ...


@dataclass(frozen=True)
class SpringPlant:
    """Robot on the three-spring-damper cable with stiffness (1 + w) k0."""

    rp: RobotParams
    cm: CableSpringModel
    w: float = 0.0
    name: str = "spring"

    def dynamics(self, x, u: float) -> np.ndarray:
        return dynamics_spring(x, u, self.w, self.rp, self.cm)

    def hold_dynamics(self, x) -> np.ndarray:
        """Joints locked: only the pivot height moves, carrying the whole robot."""
        x = np.asarray(x, dtype=float)
        zdd = (spring_force(x[2], x[5], self.cm, self.w) - self.rp.total_mass * self.rp.g) / self.rp.total_mass
        return np.array([0.0, 0.0, x[5], 0.0, 0.0, zdd])

    def embed(self, robot_state) -> np.ndarray:
        return np.asarray(robot_state, dtype=float)[:6].copy()

    def robot_state(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[:6]

    def equilibrium(self) -> float:
        k = self.cm.stiffness(self.w)
        return float((k @ np.asarray(self.cm.zc) - self.rp.total_mass * self.rp.g) / k.sum())

    def exchange(self, x) -> Tuple["SpringPlant", np.ndarray]:
        return self, grip_exchange(x, self.equilibrium())

    def substeps(self, dt: float) -> int:
        return 1


@dataclass(frozen=True)
class FullCablePlant:
    """Robot on the lumped-mass cable; ``stiffness_scale`` multiplies the segment stiffness."""

    rp: RobotParams
    fc: FullCableModel
    stiffness_scale: float = 1.0
    name: str = "fullcable"

    def __post_init__(self):
        if self.stiffness_scale <= 0:
            raise ConfigError("stiffness scale must be positive")

    @property
    def cable(self) -> FullCableModel:
        return self.fc.scaled(self.stiffness_scale)

    def dynamics(self, x, u: float) -> np.ndarray:
        return dynamics_fullcable(x, u, self.cable, self.rp)

    def hold_dynamics(self, x) -> np.ndarray:
        return dynamics_fullcable(x, 0.0, self.cable, self.rp, hold_joints=True)

    def embed(self, robot_state) -> np.ndarray:
        return extended_state(np.asarray(robot_state, dtype=float)[:6], self.cable, self.rp)

    def robot_state(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[:6]

    def exchange(self, x) -> Tuple["FullCablePlant", np.ndarray]:
        """
        Move the pivot to the node nearest the free gripper.

        Raises:
            ConfigError: If that node is not an interior node of the cable
        """
        x = np.asarray(x, dtype=float)
        robot, z, dz = split_state(x, self.fc)
        offset = gripper_position(robot, self.rp)[0]
        index = self.fc.attach_index + int(round(offset / self.fc.spacing))
        if not 0 < index < self.fc.n_nodes - 1:
            raise ConfigError(f"pivot would move to node {index}, outside the cable interior")
        logger.debug("grip exchange: pivot node %d -> %d", self.fc.attach_index, index)
        plant = replace(self, fc=replace(self.fc, attach_index=index))
        new_robot = grip_exchange(robot, float(z[index]), float(dz[index]))
        return plant, np.concatenate([new_robot, z, dz])

    def substeps(self, dt: float) -> int:
        return max(1, math.ceil(dt / FULL_CABLE_MAX_STEP - 1e-9))
