"""Tests for sampled trajectories and the fixed-step integrator."""

import numpy as np
import pytest

from pybrach.core.errors import ConfigError, DivergenceError, HorizonError, MissingInputError
from pybrach.model.integrate import integrate, rk4_step
from pybrach.model.trajectory import Trajectory


def _ramp() -> Trajectory:
    times = np.array([0.0, 0.5, 1.0])
    states = np.array([[0.0] * 6, [1.0] * 6, [2.0] * 6])
    return Trajectory(times, states, np.array([1.0, -1.0]))


def test_inputs_padded_to_sample_count():
    """Test that N inputs for N + 1 samples are padded with the last value."""
    traj = _ramp()
    np.testing.assert_array_equal(traj.inputs, [1.0, -1.0, -1.0])
    assert traj.duration == 1.0
    assert len(traj) == 3


def test_state_interpolation_and_input_hold():
    """Test linear state interpolation and zero-order-hold inputs."""
    traj = _ramp()
    np.testing.assert_allclose(traj.state_at(0.25), [0.5] * 6)
    assert traj.input_at(0.49) == 1.0
    assert traj.input_at(0.5) == -1.0
    assert traj.input_at(1.0) == -1.0


def test_query_outside_horizon():
    """Test that queries outside [t0, tf] raise HorizonError."""
    traj = _ramp()
    with pytest.raises(HorizonError):
        traj.state_at(1.1)
    with pytest.raises(HorizonError):
        traj.input_at(-0.1)


def test_invalid_trajectories():
    """Test validation of sample times and array shapes."""
    with pytest.raises(ConfigError):
        Trajectory([0.0, 0.0], np.zeros((2, 6)), [0.0])
    with pytest.raises(ConfigError):
        Trajectory([0.0, 1.0], np.zeros((3, 6)), [0.0])
    with pytest.raises(ConfigError):
        Trajectory([0.0, 1.0], np.zeros((2, 6)), [0.0, 0.0, 0.0])


def test_save_and_load(tmp_path):
    """Test the whitespace-separated trajectory file."""
    path = tmp_path / "reference.txt"
    _ramp().save(path)
    text = path.read_text()
    assert text.startswith("# t theta1 theta2 zg dtheta1 dtheta2 dzg u")
    loaded = Trajectory.load(path)
    np.testing.assert_array_equal(loaded.states, _ramp().states)
    np.testing.assert_array_equal(loaded.inputs, _ramp().inputs)


def test_load_missing_file(tmp_path):
    """Test that a missing trajectory raises MissingInputError."""
    with pytest.raises(MissingInputError):
        Trajectory.load(tmp_path / "nothing.txt")


def test_resample_and_robot_states():
    """Test resampling onto a finer grid and dropping extra columns."""
    traj = Trajectory([0.0, 1.0], np.arange(16.0).reshape(2, 8), [0.0])
    fine = traj.resample(np.linspace(0.0, 1.0, 5))
    assert fine.states.shape == (5, 8)
    assert traj.robot_states().shape == (2, 6)


def test_rk4_matches_exponential():
    """Test integration of x' = -x against the exact solution."""
    traj = integrate(lambda x, u: -x, [1.0], None, 0.0, 1.0, 0.01)
    assert traj.final_state[0] == pytest.approx(np.exp(-1.0), abs=1e-9)
    assert traj.tf == 1.0


def test_rk4_step_exact_for_polynomials():
    """Test a single RK4 step with a constant rate."""
    x = rk4_step(lambda x, u: np.array([u]), np.array([0.0]), 2.0, 0.5)
    assert x[0] == pytest.approx(1.0)


def test_input_held_over_each_interval():
    """Test zero-order hold of the input law."""
    traj = integrate(lambda x, u: np.array([u]), [0.0], lambda t, x: t, 0.0, 1.0, 0.1)
    assert traj.final_state[0] == pytest.approx(0.45)
    assert traj.inputs[3] == pytest.approx(0.3)


def test_substeps_refine_accuracy():
    """Test that substeps reduce the integration error."""
    coarse = integrate(lambda x, u: -5.0 * x, [1.0], None, 0.0, 1.0, 0.2)
    fine = integrate(lambda x, u: -5.0 * x, [1.0], None, 0.0, 1.0, 0.2, substeps=10)
    exact = np.exp(-5.0)
    assert abs(fine.final_state[0] - exact) < abs(coarse.final_state[0] - exact)
    assert len(fine) == len(coarse) == 6


def test_last_step_lands_on_final_time():
    """Test that a horizon not divisible by dt ends exactly at tf."""
    traj = integrate(lambda x, u: np.zeros(1), [0.0], None, 0.0, 0.25, 0.1)
    np.testing.assert_allclose(traj.times, [0.0, 0.1, 0.2, 0.25])


def test_divergence_detected():
    """Test that a finite-time blow-up raises DivergenceError."""
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as info:
            integrate(lambda x, u: x ** 2, [1.0], None, 0.0, 2.0, 0.01)
    assert 0.9 < info.value.time <= 2.0


def test_integrate_arguments_checked():
    """Test rejection of bad step sizes and horizons."""
    with pytest.raises(ConfigError):
        integrate(lambda x, u: x, [1.0], None, 0.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        integrate(lambda x, u: x, [1.0], None, 1.0, 1.0, 0.1)
