"""Tests for the funnel data model, projections and the funnel file format."""

import math

import numpy as np
import pytest

from pybrach.core.errors import ConfigError, HorizonError, MissingInputError, NumericalFailure
from pybrach.funnel.model import (Ellipse, Funnel, GoalSet, funnel_contains, funnel_from_text,
                                  funnel_to_text, load_funnel, project_area, project_funnel, save_funnel)
from pybrach.model.params import UncertaintyBox


def _shape():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(4, 4))
    return A @ A.T + 4.0 * np.eye(4)


def test_levels_and_interpolation(funnel_factory):
    """Test linear interpolation of levels, shapes and controller rows."""
    funnel = funnel_factory([0.0, 1.0, 2.0], np.diag([1.0, 2.0]), levels=[3.0, 2.0, 1.0],
                            controller=[[0.0, -1.0], [1.0, -2.0], [0.0, 0.0]])
    assert funnel.level_at(0.5) == pytest.approx(2.5)
    np.testing.assert_allclose(funnel.controller_at(0.5), [0.5, -1.5])
    np.testing.assert_allclose(funnel.shape_at(1.5), np.diag([1.0, 2.0]))
    assert funnel.integral() == pytest.approx(2.5 + 1.5)
    assert funnel.n_states == 2


def test_horizon_enforced(funnel_factory):
    """Test that queries outside the horizon raise HorizonError."""
    funnel = funnel_factory([0.0, 1.0], np.eye(2))
    with pytest.raises(HorizonError):
        funnel.level_at(1.5)
    with pytest.raises(HorizonError):
        funnel_contains(funnel, np.zeros(2), -0.1)


def test_funnel_invariants(funnel_factory):
    """Test rejection of malformed funnels."""
    with pytest.raises(ConfigError):
        funnel_factory([0.0, 1.0], np.eye(2), levels=[2.0, 1.5])
    with pytest.raises(ConfigError):
        funnel_factory([0.0, 1.0], np.eye(2), levels=[-1.0, 1.0])
    with pytest.raises(ConfigError):
        funnel_factory([0.0, 1.0], np.eye(2), controller=np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        funnel_factory([0.0, 1.0], np.eye(2), outputs=(2,), controller=np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        funnel_factory([1.0, 0.0], np.eye(2))
    with pytest.raises(ConfigError):
        funnel_factory([0.0, 1.0], np.eye(2), limits=(1.0, -1.0))
    S = np.repeat(np.eye(2)[None], 2, axis=0)
    P = np.zeros_like(S)
    P[-1] = 0.1 * np.eye(2)
    with pytest.raises(ConfigError):
        Funnel([0.0, 1.0], S, P, [1.0, 1.0], np.zeros((2, 2)), [0.0, 0.0], (-1.0, 1.0), None, (0,))


def test_containment(funnel_factory):
    """Test membership and margin of deviation states."""
    funnel = funnel_factory([0.0, 1.0], np.diag([1.0, 4.0]), levels=[4.0, 1.0])
    inside, margin = funnel_contains(funnel, [1.0, 0.5], 0.0)
    assert inside and margin == pytest.approx(2.0)
    outside, margin = funnel_contains(funnel, [1.0, 0.5], 1.0)
    assert not outside and margin == pytest.approx(-1.0)
    assert funnel_contains(funnel, [1.0, 0.0], 1.0)[0]


def test_goal_set(funnel_factory):
    """Test that the goal set is the final Riccati shape at level 1."""
    funnel = funnel_factory([0.0, 1.0], np.diag([2.0, 8.0]), levels=[5.0, 1.0])
    assert funnel.goal.contains([0.5, 0.25])
    assert not funnel.goal.contains([0.8, 0.0])
    with pytest.raises(ConfigError):
        GoalSet(np.diag([1.0, 0.0]))


def test_feedback_reads_outputs_only(funnel_factory):
    """Test the output-feedback law and its full-width gain matrix."""
    funnel = funnel_factory([0.0, 1.0], np.eye(3), outputs=(0, 2),
                            controller=[[0.5, -1.0, -2.0], [0.5, -1.0, -2.0]])
    assert funnel.feedback(0.3, [1.0, 100.0, 1.0]) == pytest.approx(0.5 - 1.0 - 2.0)
    np.testing.assert_allclose(funnel.gain_matrix()[0], [-1.0, 0.0, -2.0])


def test_projection_is_schur_complement(funnel_factory):
    """Test that the projected shape equals the Schur complement of the slice shape."""
    M = _shape()
    funnel = funnel_factory([0.0, 1.0], M, levels=[2.0, 1.0])
    ellipse = project_funnel(funnel, 0.0, (0, 2))
    keep, drop = [0, 2], [1, 3]
    schur = (M[np.ix_(keep, keep)]
             - M[np.ix_(keep, drop)] @ np.linalg.solve(M[np.ix_(drop, drop)], M[np.ix_(drop, keep)]))
    np.testing.assert_allclose(ellipse.shape, schur, rtol=1e-9)
    assert ellipse.level == pytest.approx(2.0)


def test_projection_boundary_is_tight(funnel_factory):
    """Test that each boundary point lifts to a point on the slice boundary."""
    M = _shape()
    funnel = funnel_factory([0.0, 1.0], M, levels=[2.0, 1.0])
    ellipse = project_funnel(funnel, 0.0, (1, 3))
    keep, drop = [1, 3], [0, 2]
    for y in ellipse.boundary(16):
        z = -np.linalg.solve(M[np.ix_(drop, drop)], M[np.ix_(drop, keep)] @ y)
        x = np.zeros(4)
        x[keep], x[drop] = y, z
        assert x @ M @ x == pytest.approx(2.0, rel=1e-9)


def test_projection_of_diagonal_shape(funnel_factory):
    """Test semi-axes and area of a projected axis-aligned ellipsoid."""
    funnel = funnel_factory([0.0, 1.0], np.diag([1.0, 4.0, 9.0]))
    ellipse = project_funnel(funnel, 1.0, (0, 1))
    np.testing.assert_allclose(sorted(ellipse.semi_axes), [0.5, 1.0])
    assert project_area(funnel, 1.0, (0, 1)) == pytest.approx(math.pi * 0.5)


def test_projection_argument_checks(funnel_factory):
    """Test rejection of bad coordinate pairs and singular shapes."""
    funnel = funnel_factory([0.0, 1.0], np.eye(3))
    with pytest.raises(ConfigError):
        project_funnel(funnel, 0.0, (1, 1))
    singular = funnel_factory([0.0, 1.0], np.diag([1.0, 1.0, 1e-20]))
    with pytest.raises(NumericalFailure):
        project_funnel(singular, 0.0, (0, 1))


def test_ellipse_boundary_on_level():
    """Test that boundary points satisfy the ellipse equation."""
    ellipse = Ellipse((0, 1), np.array([[2.0, 0.5], [0.5, 1.0]]), 3.0)
    for y in ellipse.boundary():
        assert ellipse.value(y) == pytest.approx(3.0, rel=1e-9)
    assert ellipse.contains([0.0, 0.0])
    assert not ellipse.contains([3.0, 3.0])


def test_funnel_text_round_trip(tmp_path, funnel_factory):
    """Test the funnel file with and without an uncertainty box."""
    for box in (None, UncertaintyBox(-0.2, 0.2)):
        funnel = funnel_factory([0.0, 0.5, 1.0], _shape(), levels=[3.0, 2.0, 1.0], outputs=(0, 1),
                                controller=np.arange(9.0).reshape(3, 3), u_ref=[0.1, 0.2, 0.3],
                                uncertainty=box)
        path = tmp_path / "funnel.txt"
        save_funnel(funnel, path)
        loaded = load_funnel(path)
        np.testing.assert_array_equal(loaded.S, funnel.S)
        np.testing.assert_array_equal(loaded.r, funnel.r)
        np.testing.assert_array_equal(loaded.controller, funnel.controller)
        assert loaded.uncertainty == box
        assert loaded.output_indices == (0, 1)
        assert loaded.limits == funnel.limits


def test_funnel_file_errors(tmp_path, funnel_factory):
    """Test missing files, foreign files and version mismatches."""
    with pytest.raises(MissingInputError):
        load_funnel(tmp_path / "nothing.txt")
    with pytest.raises(ConfigError):
        funnel_from_text("something else\n")
    text = funnel_to_text(funnel_factory([0.0, 1.0], np.eye(2)))
    with pytest.raises(ConfigError):
        funnel_from_text(text.replace("pybrach-funnel 1", "pybrach-funnel 9"))
