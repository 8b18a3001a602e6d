"""Tests for spectra, harmonic extraction and the output-error identification."""

import math

import numpy as np
import pytest

from scipy import optimize

from pybrach.core.errors import ConfigError, NumericalFailure
from pybrach.model.full_cable import cable_static_shape
from pybrach.model.params import CableSpringModel
from pybrach.model.trajectory import Trajectory
from pybrach.sysid import output_error
from pybrach.sysid.output_error import (SysIdSettings, default_bounds, fit_cable_model, fullcable_response,
                                        harmonic_cost, output_error_cost, response_harmonics,
                                        spring_response, swing_excitation)
from pybrach.sysid.spectrum import HarmonicFit, compute_spectrum, extract_harmonics

DT = 0.01


def _signal(*components, n=1000):
    t = DT * np.arange(n)
    return sum(a * np.sin(2.0 * math.pi * f * t) for f, a in components) + 1.5


def test_spectrum_of_sinusoid():
    """Test that a 2 Hz sinusoid peaks at 2 Hz with its amplitude."""
    s = compute_spectrum(_signal((2.0, 0.3)), DT)
    assert s.resolution == pytest.approx(0.1)
    k = int(np.argmax(s.amps))
    assert s.freqs[k] == pytest.approx(2.0)
    assert s.amps[k] == pytest.approx(0.3, rel=1e-9)


def test_spectrum_removes_mean():
    """Test that a constant signal has an empty spectrum."""
    s = compute_spectrum(np.full(256, 4.2), DT)
    assert s.amps.max() < 1e-12
    assert s.power() < 1e-20


def test_spectrum_power_matches_mean_square():
    """Test that the spectrum carries the signal's mean-square value."""
    signal = _signal((1.0, 0.5), (3.0, 0.2))
    s = compute_spectrum(signal, DT)
    assert s.power() == pytest.approx(np.mean((signal - signal.mean()) ** 2), rel=1e-9)


def test_spectrum_input_checks():
    """Test rejection of short signals and bad sampling intervals."""
    with pytest.raises(ConfigError):
        compute_spectrum(np.zeros(10), DT)
    with pytest.raises(ConfigError):
        compute_spectrum(np.zeros(128), 0.0)


def test_harmonics_sorted_by_frequency():
    """Test extraction of three on-bin harmonics."""
    s = compute_spectrum(_signal((1.0, 0.5), (2.0, 0.2), (3.0, 0.1)), DT)
    fit = extract_harmonics(s, 3)
    np.testing.assert_allclose(fit.f, [1.0, 2.0, 3.0], atol=1e-9)
    np.testing.assert_allclose(fit.a, [0.5, 0.2, 0.1], rtol=1e-9)


def test_harmonics_interpolate_between_bins():
    """Test parabolic refinement of an off-bin peak."""
    s = compute_spectrum(_signal((2.03, 0.4)), DT)
    fit = extract_harmonics(s, 1)
    assert abs(fit.f[0] - 2.03) < abs(2.0 - 2.03)


def test_two_harmonics_keep_their_ratio():
    """Test that a 2:1 pair of sinusoids yields a 2:1 frequency ratio."""
    s = compute_spectrum(_signal((1.5, 0.3), (3.0, 0.3)), DT)
    fit = extract_harmonics(s, 2)
    assert fit.f[1] / fit.f[0] == pytest.approx(2.0, rel=1e-6)


def test_too_few_peaks():
    """Test that asking for more peaks than exist raises NumericalFailure."""
    s = compute_spectrum(_signal((2.0, 0.3)), DT)
    with pytest.raises(NumericalFailure):
        extract_harmonics(s, 3)


def test_harmonic_fit_validation():
    """Test that harmonic frequencies must increase."""
    with pytest.raises(ConfigError):
        HarmonicFit((2.0, 1.0), (0.1, 0.1))


def test_harmonic_cost_weights_amplitudes():
    """Test the frequency and scaled amplitude terms of the cost."""
    reference = HarmonicFit((1.0, 2.0), (0.1, 0.05))
    assert harmonic_cost(reference, reference) == 0.0
    shifted = HarmonicFit((1.1, 2.0), (0.1, 0.06))
    assert harmonic_cost(shifted, reference, amplitude_scale=100.0) == pytest.approx(0.01 + 1.0)


def test_harmonic_cost_offset_term():
    """Test that the signal offset counts only when both fits carry it."""
    reference = HarmonicFit((1.0,), (0.1,), 2.0)
    assert harmonic_cost(HarmonicFit((1.0,), (0.1,), 2.01), reference) == pytest.approx(1.0)
    assert harmonic_cost(HarmonicFit((1.0,), (0.1,)), reference) == 0.0


def test_spectrum_keeps_removed_mean():
    """Test that the spectrum and its harmonics remember the signal mean."""
    s = compute_spectrum(_signal((2.0, 0.3)), DT)
    assert s.mean == pytest.approx(1.5)
    assert extract_harmonics(s, 1).offset == pytest.approx(1.5)


def test_swing_excitation_zero_after_swing():
    """Test the open-loop excitation built from a reference."""
    reference = Trajectory([0.0, 0.5, 1.0], np.zeros((3, 6)), [1.0, -1.0])
    u = swing_excitation(reference)
    assert u(0.2) == 1.0
    assert u(0.7) == -1.0
    assert u(1.0) == 0.0
    assert u(3.0) == 0.0


@pytest.fixture
def excitation():
    return swing_excitation(Trajectory([0.0, 0.5, 1.0], np.zeros((3, 6)), [1.0, -1.0]))


@pytest.fixture
def short_settings():
    return SysIdSettings(duration=5.0, harmonics=1, restarts=0, max_iterations=20)


def test_self_match_has_zero_cost(robot, cable, excitation, short_settings):
    """Test that a model reproduces its own harmonics exactly."""
    signal = spring_response(cable, excitation, robot, short_settings)
    _, reference = response_harmonics(signal, short_settings)
    assert output_error_cost(cable, reference, excitation, robot, short_settings) < 1e-10
    stiffer = CableSpringModel(k0=tuple(1.3 * k for k in cable.k0), b=cable.b, zc=cable.zc)
    assert output_error_cost(stiffer, reference, excitation, robot, short_settings) > 1e-6


def test_fit_returns_initial_model_when_exact(robot, cable, excitation, short_settings):
    """Test that an exact initial model ends the search immediately."""
    signal = spring_response(cable, excitation, robot, short_settings)
    _, reference = response_harmonics(signal, short_settings)
    result = fit_cable_model(reference, cable, None, excitation, robot, short_settings)
    assert result.model == cable
    assert result.iterations == 0
    assert result.cost <= result.initial_cost


def test_fit_never_worse_than_start(robot, cable, excitation, short_settings):
    """Test that identification from a perturbed start does not increase the cost."""
    signal = spring_response(cable, excitation, robot, short_settings)
    _, reference = response_harmonics(signal, short_settings)
    start = CableSpringModel(k0=tuple(1.2 * k for k in cable.k0), b=cable.b, zc=cable.zc)
    result = fit_cable_model(reference, start, None, excitation, robot, short_settings)
    assert result.cost <= result.initial_cost
    assert result.iterations > 0
    np.testing.assert_allclose(np.array(result.model.k0) / sum(result.model.k0), np.array(cable.k0) / sum(cable.k0))


def test_fit_rejects_initial_outside_bounds(robot, cable, excitation, short_settings):
    """Test that bounds must contain the initial model."""
    reference = HarmonicFit((2.0,), (0.01,))
    bounds = default_bounds(cable)
    bounds[0] = (1.0, 2.0)
    with pytest.raises(ConfigError):
        fit_cable_model(reference, cable, bounds, excitation, robot, short_settings)


def test_height_shift_shows_in_offset(robot, cable, excitation, short_settings):
    """Test that raising every spring anchor costs exactly the offset change."""
    signal = spring_response(cable, excitation, robot, short_settings)
    _, reference = response_harmonics(signal, short_settings)
    assert reference.offset == pytest.approx(np.mean(signal))
    raised = CableSpringModel(k0=cable.k0, b=cable.b, zc=tuple(z + 0.01 for z in cable.zc))
    assert output_error_cost(raised, reference, excitation, robot, short_settings) == pytest.approx(1.0, rel=1e-6)


def _aggregate_cost(target):
    k_t, b_t, z_t = target.equivalent()

    def cost(candidate, reference, u_of_t, rp, settings, joints=(0.0, 0.0)):
        k, b, z = candidate.equivalent()
        return math.log(k / k_t) ** 2 + math.log(b / b_t) ** 2 + ((z - z_t) / 0.1) ** 2

    return cost


def _idle(t, x=None):
    return 0.0


def test_fit_moves_aggregates_and_keeps_split(monkeypatch, robot, cable):
    """Test that the search reaches the target totals while keeping the initial split."""
    monkeypatch.setattr(output_error, "output_error_cost", _aggregate_cost(cable))
    start = CableSpringModel(k0=tuple(1.3 * k for k in cable.k0), b=tuple(0.8 * b for b in cable.b),
                             zc=tuple(z + 0.05 for z in cable.zc))
    result = fit_cable_model(HarmonicFit((1.0,), (0.1,)), start, None, _idle, robot,
                             SysIdSettings(restarts=1, max_iterations=400))
    k, b, z = result.model.equivalent()
    k_t, b_t, z_t = cable.equivalent()
    assert k == pytest.approx(k_t, rel=1e-3)
    assert b == pytest.approx(b_t, rel=1e-3)
    assert z == pytest.approx(z_t, abs=1e-3)
    np.testing.assert_allclose(np.array(result.model.k0) / k, np.array(start.k0) / sum(start.k0))
    np.testing.assert_allclose(np.array(result.model.zc) - start.zc, z - start.equivalent()[2], atol=1e-12)
    assert result.converged


def test_fit_reports_convergence_of_best_run(monkeypatch, robot, cable):
    """Test that a stalled restart does not hide a converged best run."""
    monkeypatch.setattr(output_error, "output_error_cost", _aggregate_cost(cable))
    real_minimize = optimize.minimize
    starts = []

    def stall_restarts(fun, x0, **kwargs):
        starts.append(np.array(x0))
        if len(starts) == 1:
            return real_minimize(fun, x0, **kwargs)
        return optimize.OptimizeResult(x=np.array(x0), nit=0, success=False)

    monkeypatch.setattr(output_error.optimize, "minimize", stall_restarts)
    start = CableSpringModel(k0=tuple(1.3 * k for k in cable.k0), b=cable.b, zc=cable.zc)
    result = fit_cable_model(HarmonicFit((1.0,), (0.1,)), start, None, _idle, robot,
                             SysIdSettings(restarts=2, max_iterations=400))
    assert len(starts) == 3
    assert result.converged
    assert result.model.equivalent()[0] == pytest.approx(cable.equivalent()[0], rel=1e-3)


def test_default_bounds_scale_checked(cable):
    """Test that the bound factor must not shrink the box below the model."""
    with pytest.raises(ConfigError):
        default_bounds(cable, 0.5)
    assert default_bounds(cable, 2.0)[0] == pytest.approx((cable.k0[0] / 2.0, cable.k0[0] * 2.0))


def test_fullcable_response_starts_from_static_sag(robot, full_cable, excitation):
    """Test a short pivot-height record of the robot on the lumped-mass cable."""
    signal = fullcable_response(full_cable, excitation, robot, SysIdSettings(duration=1.0))
    assert len(signal) >= 100
    assert np.all(np.isfinite(signal))
    assert signal[0] == pytest.approx(cable_static_shape(full_cable, robot)[-1])
    assert signal[0] < full_cable.anchor_height
    assert np.abs(signal - signal[0]).max() < 0.05


@pytest.mark.slow
def test_fit_recovers_aggregates_from_perturbed_start(robot, cable, excitation):
    """Test recovery of total stiffness and weighted height from a 30% stiff, 2% high start."""
    settings = SysIdSettings(duration=6.0, harmonics=2, restarts=1, max_iterations=150)
    signal = spring_response(cable, excitation, robot, settings)
    _, reference = response_harmonics(signal, settings)
    start = CableSpringModel(k0=tuple(1.3 * k for k in cable.k0), b=cable.b,
                             zc=tuple(1.02 * z for z in cable.zc))
    result = fit_cable_model(reference, start, None, excitation, robot, settings)
    k, _, z = result.model.equivalent()
    k_t, _, z_t = cable.equivalent()
    assert k == pytest.approx(k_t, rel=0.05)
    assert z == pytest.approx(z_t, rel=0.02)
    assert result.cost < result.initial_cost


@pytest.mark.slow
def test_fit_against_full_cable_near_identified_values(robot, cable, full_cable, excitation):
    """Test that the spring fit to the lumped-mass cable lands near the identified totals."""
    settings = SysIdSettings(restarts=1, max_iterations=150)
    signal = fullcable_response(full_cable, excitation, robot, settings)
    _, reference = response_harmonics(signal, settings)
    result = fit_cable_model(reference, cable, None, excitation, robot, settings)
    k, b, z = result.model.equivalent()
    k_t, b_t, z_t = cable.equivalent()
    assert k == pytest.approx(k_t, rel=0.25)
    assert z == pytest.approx(z_t, rel=0.25)
    assert b_t / 3.0 <= b <= 3.0 * b_t
    assert result.cost <= result.initial_cost
