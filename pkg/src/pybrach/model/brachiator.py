"""
Brachiator Dynamics - Two-link robot hanging from a vertically moving pivot.

Generalized coordinates q = (theta1, theta2, zg): theta1 is the first link's
angle from the downward vertical, theta2 the elbow angle relative to link 1,
zg the height of the pivot gripper. The main body m0 sits at the elbow. The
equations of motion below were derived from the Lagrangian

    T = 1/2 sum m_j |v_j|^2 + 1/2 I1 dtheta1^2 + 1/2 I2 (dtheta1 + dtheta2)^2
    U = g (M zg - a cos(theta1) - b cos(theta1 + theta2)) + 1/2 sum k_i (zg - zc_i)^2

with a = m1 d1 + (m0 + m2) l1, b = m2 d2 and M = m0 + m1 + m2, and are
transcribed in closed form. The elbow torque enters the theta2 equation only.
"""

import logging

import numpy as np

from ..core.errors import NumericalFailure
from .params import CableSpringModel, RobotParams

logger = logging.getLogger(__name__)


def _lumped(rp: RobotParams) -> tuple[float, float, float]:
    a = rp.m1 * rp.d1 + (rp.m0 + rp.m2) * rp.l1
    b = rp.m2 * rp.d2
    return a, b, rp.m2 * rp.l1 * rp.d2


def mass_matrix(q, rp: RobotParams) -> np.ndarray:
    """
    Symmetric positive-definite inertia matrix M(q).

    Args:
        q: Generalized coordinates (theta1, theta2, zg); extra entries ignored
        rp: Robot parameters

    Returns:
        3x3 mass matrix
    """
    th1, th2 = q[0], q[1]
    a, b, c = _lumped(rp)
    s1, s12, c2 = np.sin(th1), np.sin(th1 + th2), np.cos(th2)
    m11 = (rp.m1 * rp.d1 ** 2 + rp.m0 * rp.l1 ** 2
           + rp.m2 * (rp.l1 ** 2 + rp.d2 ** 2) + 2.0 * c * c2 + rp.I1 + rp.I2)
    m12 = rp.m2 * rp.d2 ** 2 + c * c2 + rp.I2
    m22 = rp.m2 * rp.d2 ** 2 + rp.I2
    m13 = a * s1 + b * s12
    m23 = b * s12
    return np.array([[m11, m12, m13],
                     [m12, m22, m23],
                     [m13, m23, rp.total_mass]])


def bias_forces(q, dq, rp: RobotParams) -> np.ndarray:
    """Coriolis, centrifugal and gravity terms h(q, dq) of M q'' + h = tau."""
    th1, th2 = q[0], q[1]
    dth1, dth2 = dq[0], dq[1]
    a, b, c = _lumped(rp)
    s1, c1 = np.sin(th1), np.cos(th1)
    s12, c12 = np.sin(th1 + th2), np.cos(th1 + th2)
    s2 = np.sin(th2)
    coriolis = np.array([
        -c * s2 * (2.0 * dth1 * dth2 + dth2 ** 2),
        c * s2 * dth1 ** 2,
        a * c1 * dth1 ** 2 + b * c12 * (dth1 + dth2) ** 2,
    ])
    gravity = rp.g * np.array([a * s1 + b * s12, b * s12, rp.total_mass])
    return coriolis + gravity


def spring_force(zg: float, dzg: float, cm: CableSpringModel, w: float = 0.0) -> float:
    """Generalized force the springs and dampers exert on zg (positive up)."""
    k = cm.stiffness(w)
    return float(k @ (np.asarray(cm.zc) - zg) - sum(cm.b) * dzg)


def accelerations(q, dq, u: float, external_zg: float, rp: RobotParams) -> np.ndarray:
    """Solve M q'' = tau - h for given elbow torque and external force on zg."""
    rhs = np.array([0.0, u, external_zg]) - bias_forces(q, dq, rp)
    try:
        return np.linalg.solve(mass_matrix(q, rp), rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"singular mass matrix at q = {np.asarray(q)[:3]}") from exc


def dynamics_spring(x, u: float, w: float, rp: RobotParams, cm: CableSpringModel) -> np.ndarray:
    """
    State derivative of the robot on the three-spring-damper cable.

    Args:
        x: State (theta1, theta2, zg, dtheta1, dtheta2, dzg)
        u: Elbow torque, N m
        w: Fractional stiffness uncertainty; stiffness is (1 + w) k0
        rp: Robot parameters
        cm: Cable spring model

    Returns:
        dx/dt as a 6-vector
    """
    x = np.asarray(x, dtype=float)
    q, dq = x[:3], x[3:6]
    qdd = accelerations(q, dq, u, spring_force(x[2], x[5], cm, w), rp)
    return np.concatenate([dq, qdd])


def mechanical_energy(x, rp: RobotParams, cm: CableSpringModel, w: float = 0.0) -> float:
    """Kinetic plus gravitational plus spring potential energy, J."""
    x = np.asarray(x, dtype=float)
    q, dq = x[:3], x[3:6]
    a, b, _ = _lumped(rp)
    kinetic = 0.5 * dq @ mass_matrix(q, rp) @ dq
    gravity = rp.g * (rp.total_mass * q[2] - a * np.cos(q[0]) - b * np.cos(q[0] + q[1]))
    springs = 0.5 * cm.stiffness(w) @ (q[2] - np.asarray(cm.zc)) ** 2
    return float(kinetic + gravity + springs)


def static_equilibrium(cm: CableSpringModel, rp: RobotParams) -> float:
    """
    Pivot height where the springs carry the robot's weight.

    Returns:
        The root of sum k0_i (zc_i - z) = (m0 + m1 + m2) g
    """
    k = np.asarray(cm.k0)
    return float((k @ np.asarray(cm.zc) - rp.total_mass * rp.g) / k.sum())


def gripper_position(x, rp: RobotParams) -> np.ndarray:
    """Horizontal offset and height of the free gripper relative to the pivot frame."""
    th1, th2, zg = x[0], x[1], x[2]
    return np.array([rp.l1 * np.sin(th1) + rp.l2 * np.sin(th1 + th2),
                     zg - rp.l1 * np.cos(th1) - rp.l2 * np.cos(th1 + th2)])
