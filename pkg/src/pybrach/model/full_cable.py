"""
Full Cable - Robot on a lumped-mass cable, used as the identification reference.

Extended state layout (length 6 + 2 n_nodes):

    [theta1, theta2, zg, dtheta1, dtheta2, dzg, z_0 .. z_{n-1}, dz_0 .. dz_{n-1}]

Node heights z_j are absolute; the two end nodes are pinned.
"""

import logging

import numpy as np
from scipy import optimize

from ..core.errors import NumericalFailure
from .brachiator import accelerations
from .params import GRAVITY, FullCableModel, RobotParams

logger = logging.getLogger(__name__)


def split_state(x, fc: FullCableModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return robot state, node heights and node velocities views."""
    n = fc.n_nodes
    return x[:6], x[6:6 + n], x[6 + n:6 + 2 * n]


def cable_forces(z, dz, fc: FullCableModel, g: float = GRAVITY) -> np.ndarray:
    """
    Vertical forces on each node from the axial segments and gravity.

    Args:
        z: Node heights, m
        dz: Node vertical velocities, m/s
        fc: Cable description
        g: Gravitational acceleration acting on the cable mass, m/s^2

    Returns:
        Net vertical force per node, N (pinned nodes included)
    """
    dx = fc.spacing
    rise = np.diff(z)
    length = np.hypot(dx, rise)
    rest = dx - fc.prestretch / (fc.n_nodes - 1)
    stretch_rate = rise * np.diff(dz) / length
    tension = fc.segment_stiffness * (length - rest) + fc.bc * stretch_rate
    vertical = tension * rise / length
    force = np.full(fc.n_nodes, -fc.node_mass * g)
    force[:-1] += vertical
    force[1:] -= vertical
    return force


def junction_force(zg, dzg, z_attach, dz_attach, fc: FullCableModel) -> float:
    """Force the junction exerts on the cable node (equal and opposite on the pivot)."""
    return fc.junction_k * (zg - z_attach) + fc.junction_b * (dzg - dz_attach)


def dynamics_fullcable(x, u: float, fc: FullCableModel, rp: RobotParams,
                       hold_joints: bool = False) -> np.ndarray:
    """
    Time derivative of the extended robot-plus-cable state.

    Args:
        x: Extended state, see module docstring
        u: Elbow torque, N m
        fc: Cable description
        rp: Robot parameters
        hold_joints: Freeze both joint angles (both grippers on the cable)

    Returns:
        Extended state derivative; pinned nodes have zero velocity and acceleration
    """
    x = np.asarray(x, dtype=float)
    robot, z, dz = split_state(x, fc)
    a = fc.attach_index
    force = cable_forces(z, dz, fc, rp.g)
    if fc.attached:
        f_j = junction_force(robot[2], robot[5], z[a], dz[a], fc)
        force[a] += f_j
        if hold_joints:
            zdd = (-f_j - rp.total_mass * rp.g) / rp.total_mass
            robot_dot = np.array([0.0, 0.0, robot[5], 0.0, 0.0, zdd])
        else:
            qdd = accelerations(robot[:3], robot[3:6], u, -f_j, rp)
            robot_dot = np.concatenate([robot[3:6], qdd])
    else:
        robot_dot = np.zeros(6)
    zdd = force / fc.node_mass
    zdd[0] = zdd[-1] = 0.0
    velocity = dz.copy()
    velocity[0] = velocity[-1] = 0.0
    return np.concatenate([robot_dot, velocity, zdd])


def cable_static_shape(fc: FullCableModel, rp: RobotParams | None = None,
                       pivot_height: float | None = None) -> np.ndarray:
    """
    Static node heights of the cable.

    Args:
        fc: Cable description
        rp: Robot parameters; when given (and the cable is attached) the robot's
            weight hangs from the junction
        pivot_height: Pin the pivot at this height instead of letting it hang

    Returns:
        Node heights, or node heights followed by the pivot height when the robot
        hangs freely

    Raises:
        NumericalFailure: If the root solve does not converge
    """
    n = fc.n_nodes
    a = fc.attach_index
    hanging = rp is not None and fc.attached and pivot_height is None
    g = rp.g if rp is not None else GRAVITY

    def residual(v):
        z = np.concatenate([[fc.anchor_height], v[:n - 2], [fc.anchor_height]])
        force = cable_forces(z, np.zeros(n), fc, g)
        out = force[1:-1]
        if hanging:
            f_j = fc.junction_k * (v[-1] - z[a])
            out = out.copy()
            out[a - 1] += f_j
            return np.append(out, -f_j - rp.total_mass * rp.g)
        if pivot_height is not None and fc.attached:
            out = out.copy()
            out[a - 1] += fc.junction_k * (pivot_height - z[a])
        return out

    guess = np.full(n - 2, fc.anchor_height)
    if hanging:
        guess = np.append(guess, fc.anchor_height)
    sol = optimize.root(residual, guess, method="hybr", options={"xtol": 1e-13})
    if not sol.success:
        raise NumericalFailure(f"cable static shape did not converge: {sol.message}")
    z = np.concatenate([[fc.anchor_height], sol.x[:n - 2], [fc.anchor_height]])
    if hanging:
        return np.append(z, sol.x[-1])
    return z


def extended_state(robot_state, fc: FullCableModel, rp: RobotParams) -> np.ndarray:
    """
    Embed a robot state into the cable model.

    The cable takes its static shape with the pivot pinned at the robot's
    height; node velocities ramp linearly from the anchors to the pivot rate.
    """
    robot_state = np.asarray(robot_state, dtype=float)
    z = cable_static_shape(fc, rp, pivot_height=robot_state[2])
    stations = np.arange(fc.n_nodes)
    a = fc.attach_index
    ramp = np.where(stations <= a, stations / a, (fc.n_nodes - 1 - stations) / (fc.n_nodes - 1 - a))
    dz = robot_state[5] * ramp if fc.attached else np.zeros(fc.n_nodes)
    return np.concatenate([robot_state, z, dz])


def node_residual_forces(x, fc: FullCableModel, rp: RobotParams) -> np.ndarray:
    """Net force on every free node (junction included), for equilibrium checks."""
    robot, z, dz = split_state(np.asarray(x, dtype=float), fc)
    force = cable_forces(z, dz, fc, rp.g)
    if fc.attached:
        force[fc.attach_index] += junction_force(robot[2], robot[5], z[fc.attach_index],
                                                 dz[fc.attach_index], fc)
    return force[1:-1]
