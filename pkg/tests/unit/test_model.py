"""Tests for robot parameters, the spring-cable dynamics and the lumped-mass cable."""

import math

import numpy as np
import pytest

from pybrach.core.errors import ConfigError
from pybrach.model.brachiator import (dynamics_spring, gripper_position, mass_matrix, mechanical_energy,
                                      spring_force, static_equilibrium)
from pybrach.model.full_cable import (cable_static_shape, dynamics_fullcable, extended_state,
                                      node_residual_forces, split_state)
from pybrach.model.integrate import integrate
from pybrach.model.params import CableSpringModel, FullCableModel, RobotParams, State, UncertaintyBox
from pybrach.sysid.spectrum import compute_spectrum, extract_harmonics


def test_robot_params_validation():
    """Test rejection of non-physical robot parameters."""
    with pytest.raises(ConfigError):
        RobotParams(m0=0.0)
    with pytest.raises(ConfigError):
        RobotParams(d1=0.5)
    assert RobotParams().total_mass == pytest.approx(1.247 + 0.794 + 0.794)


def test_cable_model_text_round_trip(cable):
    """Test the k0_1=... text format of the spring model."""
    text = cable.to_text()
    assert "k0_1=76.74" in text
    assert CableSpringModel.from_text(text) == cable


def test_cable_model_text_missing_key():
    """Test that an incomplete model file raises ConfigError."""
    with pytest.raises(ConfigError):
        CableSpringModel.from_text("k0_1=1\nk0_2=2\n")


def test_cable_model_vector_and_stiffness(cable):
    """Test vector packing and the (1 + w) stiffness scaling."""
    assert CableSpringModel.from_vector(cable.as_vector()) == cable
    np.testing.assert_allclose(cable.stiffness(0.1), 1.1 * np.array(cable.k0))
    with pytest.raises(ConfigError):
        CableSpringModel(k0=(1.0, -1.0, 1.0))


def test_uncertainty_box():
    """Test containment and sampling of the uncertainty interval."""
    box = UncertaintyBox(-0.2, 0.1)
    assert box.contains(0.0)
    assert not box.contains(0.2)
    samples = box.sample(np.random.default_rng(0), size=500)
    assert samples.min() >= -0.2 and samples.max() <= 0.1
    with pytest.raises(ConfigError):
        UncertaintyBox(0.3, 0.1)


def test_state_conversions():
    """Test degree construction and vector round trip of State."""
    state = State.from_degrees(-45.0, -90.0, 1.9, 10.0)
    assert state.theta1 == pytest.approx(-math.pi / 4)
    assert state.dtheta1 == pytest.approx(math.radians(10.0))
    assert State.from_vector(state.vector) == state
    np.testing.assert_array_equal(np.asarray(state), state.vector)
    with pytest.raises(ConfigError):
        State(float("nan"), 0.0, 0.0)


def test_mass_matrix_symmetric_positive_definite(robot):
    """Test M(q) over a grid of joint angles."""
    for th1 in np.linspace(-math.pi, math.pi, 7):
        for th2 in np.linspace(-math.pi, math.pi, 7):
            M = mass_matrix([th1, th2, 1.9], robot)
            np.testing.assert_allclose(M, M.T)
            assert np.linalg.eigvalsh(M).min() > 0


def test_static_equilibrium_is_rest_point(robot, cable):
    """Test that the hanging robot at the spring equilibrium does not accelerate."""
    z_eq = static_equilibrium(cable, robot)
    assert spring_force(z_eq, 0.0, cable) == pytest.approx(robot.total_mass * robot.g)
    xdot = dynamics_spring([0.0, 0.0, z_eq, 0.0, 0.0, 0.0], 0.0, 0.0, robot, cable)
    np.testing.assert_allclose(xdot, np.zeros(6), atol=1e-9)


def test_dynamics_affine_in_uncertainty(robot, cable):
    """Test that the state derivative is affine in w."""
    x = np.array([0.3, -1.2, 1.85, 0.5, -0.4, 0.1])
    f0 = dynamics_spring(x, 0.7, 0.0, robot, cable)
    f1 = dynamics_spring(x, 0.7, 0.1, robot, cable)
    f2 = dynamics_spring(x, 0.7, 0.2, robot, cable)
    np.testing.assert_allclose(f2 - f0, 2.0 * (f1 - f0), atol=1e-9)


def test_torque_enters_elbow_channel(robot, cable):
    """Test that torque changes accelerations but not velocities."""
    x = np.array([0.2, 0.4, 1.9, 0.0, 0.0, 0.0])
    delta = dynamics_spring(x, 1.0, 0.0, robot, cable) - dynamics_spring(x, 0.0, 0.0, robot, cable)
    np.testing.assert_allclose(delta[:3], 0.0)
    assert abs(delta[4]) > 0


def test_energy_conserved_without_damping(robot):
    """Test that undamped, unforced motion conserves mechanical energy."""
    cable = CableSpringModel(b=(0.0, 0.0, 0.0))
    x0 = np.array([0.6, -0.8, static_equilibrium(cable, robot) + 0.01, 0.0, 1.0, 0.0])
    traj = integrate(lambda x, u: dynamics_spring(x, u, 0.0, robot, cable), x0, None, 0.0, 1.0, 1e-3)
    energies = [mechanical_energy(x, robot, cable) for x in traj.states]
    assert max(energies) - min(energies) < 1e-5 * abs(energies[0])


def test_energy_dissipated_with_damping(robot, cable):
    """Test that the cable dampers only remove energy."""
    x0 = np.array([0.0, 0.0, static_equilibrium(cable, robot) + 0.02, 0.0, 0.0, 0.0])
    traj = integrate(lambda x, u: dynamics_spring(x, u, 0.0, robot, cable), x0, None, 0.0, 0.5, 1e-3)
    energies = np.array([mechanical_energy(x, robot, cable) for x in traj.states])
    assert np.all(np.diff(energies) <= 1e-9)


def test_gripper_position_hanging(robot):
    """Test the free gripper position of the straight hanging robot."""
    np.testing.assert_allclose(gripper_position([0.0, 0.0, 2.0], robot), [0.0, 2.0 - 0.7])
    x, _ = gripper_position([math.pi / 2, 0.0, 2.0], robot)
    assert x == pytest.approx(0.7)


def test_full_cable_validation():
    """Test that the robot must attach to an interior node."""
    with pytest.raises(ConfigError):
        FullCableModel(attach_index=0)
    with pytest.raises(ConfigError):
        FullCableModel(n_nodes=2)


def test_full_cable_derived_quantities(full_cable):
    """Test spacing, tension and stiffness scaling of the cable."""
    assert full_cable.spacing == pytest.approx(0.5)
    assert full_cable.tension == pytest.approx(785400.0 * 1.8e-3)
    assert full_cable.scaled(0.8).tension == pytest.approx(0.8 * full_cable.tension)
    assert 1.0 < full_cable.fundamental_frequency() < 20.0


def test_extended_state_is_static(robot, full_cable):
    """Test that an embedded robot state starts the cable at rest."""
    robot_state = np.array([-0.7, -1.5, 1.95, 0.0, 0.0, 0.0])
    x = extended_state(robot_state, full_cable, robot)
    assert x.size == 6 + 2 * full_cable.n_nodes
    _, z, dz = split_state(x, full_cable)
    assert z[0] == z[-1] == full_cable.anchor_height
    np.testing.assert_allclose(dz, 0.0)
    np.testing.assert_allclose(node_residual_forces(x, full_cable, robot), 0.0, atol=1e-2)


def test_hanging_shape_sags_under_robot(robot, full_cable):
    """Test that the robot's weight pulls the attach node down."""
    shape = cable_static_shape(full_cable, robot)
    z, pivot = shape[:-1], shape[-1]
    a = full_cable.attach_index
    assert z[a] < z[a - 1] < full_cable.anchor_height
    assert pivot < z[a]
    assert z[a] - pivot == pytest.approx(robot.total_mass * robot.g / full_cable.junction_k, rel=1e-4)


def test_fullcable_pins_end_nodes(robot, full_cable):
    """Test that the anchor nodes never move."""
    x = extended_state([0.3, -0.5, 1.95, 0.5, 0.5, 0.2], full_cable, robot)
    xdot = dynamics_fullcable(x, 0.5, full_cable, robot)
    n = full_cable.n_nodes
    assert xdot[6] == xdot[6 + n - 1] == 0.0
    assert xdot[6 + n] == xdot[6 + 2 * n - 1] == 0.0


def test_fullcable_hold_freezes_joints(robot, full_cable):
    """Test that holding the joints leaves only the pivot free."""
    x = extended_state([0.3, -0.5, 1.95, 0.0, 0.0, 0.0], full_cable, robot)
    xdot = dynamics_fullcable(x, 2.0, full_cable, robot, hold_joints=True)
    np.testing.assert_allclose(xdot[[0, 1, 3, 4]], 0.0)


def test_cable_weight_follows_gravity_setting():
    """Test that the cable's own weight uses the configured gravity."""
    free = FullCableModel(attached=False)
    n = free.n_nodes
    flat = np.full(n, free.anchor_height)
    x = np.concatenate([np.zeros(6), flat, np.zeros(n)])
    xdot = dynamics_fullcable(x, 0.0, free, RobotParams(g=3.7))
    np.testing.assert_allclose(xdot[6 + n + 1:6 + 2 * n - 1], -3.7, rtol=1e-12)
    weightless = cable_static_shape(free, RobotParams(g=0.0))
    np.testing.assert_allclose(weightless, free.anchor_height, atol=1e-9)
    assert cable_static_shape(free)[free.attach_index] < free.anchor_height


def test_plucked_cable_rings_at_fundamental():
    """Test that a plucked cable's midpoint oscillates at the taut-string fundamental."""
    free = FullCableModel(attached=False)
    n, mid = free.n_nodes, free.n_nodes // 2
    stations = np.arange(n)
    pluck = 0.005 * (1.0 - np.abs(stations - mid) / mid)
    x0 = np.concatenate([np.zeros(6), cable_static_shape(free) + pluck, np.zeros(n)])
    traj = integrate(lambda x, u: dynamics_fullcable(x, u, free, RobotParams()), x0, None, 0.0, 6.0, 2e-3)
    spectrum = compute_spectrum(traj.states[:, 6 + mid], 2e-3)
    f0 = extract_harmonics(spectrum, 1).f[0]
    assert f0 == pytest.approx(free.fundamental_frequency(), rel=0.1)
    band = np.abs(spectrum.freqs - f0) < 1.0
    assert 0.5 * np.sum(spectrum.amps[band] ** 2) > 0.8 * spectrum.power()
