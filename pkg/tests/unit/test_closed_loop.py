"""Tests for closed-loop simulation of funnel and TVLQR controllers."""

from dataclasses import replace

import numpy as np
import pytest

from pybrach.control.tvlqr import LqrWeights, linearize, riccati_backward
from pybrach.core.errors import ConfigError
from pybrach.sim.closed_loop import SimulationSettings, simulate_closed_loop

SETTINGS = SimulationSettings(dt=2e-3)


def test_rest_state_stays_on_reference(hanging):
    """Test that a zero deviation stays at the reference and reaches the goal."""
    result = simulate_closed_loop(hanging.plant, hanging.funnel, hanging.reference, hanging.rest, SETTINGS)
    np.testing.assert_allclose(result.trajectory.final_state, hanging.rest, atol=1e-8)
    np.testing.assert_allclose(result.margins, hanging.funnel.r, atol=1e-8)
    assert result.reached_goal
    assert result.always_contained
    assert result.max_abs_torque == pytest.approx(0.0, abs=1e-12)
    assert result.trajectory.tf == pytest.approx(0.2)


def test_tvlqr_controller(hanging):
    """Test the full-state TVLQR law from a small joint deviation."""
    times = np.linspace(0.0, 0.2, 11)
    riccati = riccati_backward(linearize(hanging.plant.dynamics, hanging.reference, times),
                               LqrWeights.diagonal([10.0] * 6, [10.0] * 6, 0.1))
    x0 = hanging.rest + [0.02, 0.0, 0.0, 0.0, 0.0, 0.0]
    result = simulate_closed_loop(hanging.plant, hanging.funnel, hanging.reference, x0, SETTINGS,
                                  controller="tvlqr", riccati=riccati)
    assert result.max_abs_torque > 0.0
    assert result.max_abs_torque <= 5.0
    assert np.all(np.isfinite(result.trajectory.states))


def test_saturation(hanging):
    """Test that commanded torque is clipped to the funnel limits."""
    controller = np.zeros_like(hanging.funnel.controller)
    controller[:, 0] = 5.0
    funnel = replace(hanging.funnel, controller=controller, limits=(-0.5, 0.5))
    result = simulate_closed_loop(hanging.plant, funnel, hanging.reference, hanging.rest, SETTINGS)
    assert result.max_abs_torque == pytest.approx(0.5)
    unclipped = simulate_closed_loop(hanging.plant, funnel, hanging.reference, hanging.rest,
                                     SimulationSettings(dt=2e-3, saturate=False))
    assert unclipped.max_abs_torque == pytest.approx(5.0)


def test_controller_arguments(hanging):
    """Test rejection of unknown controllers and a TVLQR run without Riccati data."""
    with pytest.raises(ConfigError):
        simulate_closed_loop(hanging.plant, hanging.funnel, hanging.reference, hanging.rest, controller="pid")
    with pytest.raises(ConfigError):
        simulate_closed_loop(hanging.plant, hanging.funnel, hanging.reference, hanging.rest, controller="tvlqr")
    with pytest.raises(ConfigError):
        SimulationSettings(dt=0.0)
