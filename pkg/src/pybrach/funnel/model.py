"""
Funnel - Time-sampled certified region around a reference trajectory.

The funnel at time t is the ellipsoid {x : x^T (S(t) + P(t)) x <= r(t)} in
deviation coordinates, with S, P and r linearly interpolated between samples.
The output-feedback law is u = u_ref(t) + k0(t) + k(t) . y, where y collects the
measured deviation coordinates named by ``output_indices``.
"""

from dataclasses import dataclass, field
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError, HorizonError, MissingInputError, NumericalFailure
from ..model.params import UncertaintyBox
from ..poly.polynomial import Poly

FORMAT_VERSION = 1
BOUNDARY_POINTS = 64


@dataclass(frozen=True)
class GoalSet:
    """Final-state set {x : x^T shape x <= level}."""

    shape: np.ndarray
    level: float = 1.0

    def __post_init__(self):
        shape = np.atleast_2d(np.asarray(self.shape, dtype=float))
        if np.any(np.diag(shape) <= 0):
            raise ConfigError("goal set shape needs a positive diagonal")
        object.__setattr__(self, "shape", shape)

    def value(self, xbar) -> float:
        xbar = np.asarray(xbar, dtype=float)
        return float(xbar @ self.shape @ xbar)

    def contains(self, xbar) -> bool:
        return self.value(xbar) <= self.level


def _interpolation(times: np.ndarray, t: float) -> Tuple[int, float]:
    i = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
    return i, float(np.clip((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0))


@dataclass(frozen=True)
class Funnel:
    """
    Certified funnel and the controller it was certified with.

    Args:
        times: N+1 sample instants
        S: Riccati shapes, (N+1, n, n)
        P: Shape corrections, (N+1, n, n), PSD, zero at the final sample
        r: Levels, positive, 1 at the final sample
        controller: Per-sample ``[k0, k_1 .. k_m]``, (N+1, 1+m)
        u_ref: Reference torque at the samples
        limits: Torque limits (u_min, u_max)
        uncertainty: Stiffness uncertainty box, or None for a nominal certificate
        output_indices: State coordinates the controller reads
    """

    times: np.ndarray
    S: np.ndarray
    P: np.ndarray
    r: np.ndarray
    controller: np.ndarray
    u_ref: np.ndarray
    limits: Tuple[float, float]
    uncertainty: Optional[UncertaintyBox]
    output_indices: Tuple[int, ...]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        S = np.asarray(self.S, dtype=float)
        P = np.asarray(self.P, dtype=float)
        r = np.asarray(self.r, dtype=float).reshape(-1)
        controller = np.atleast_2d(np.asarray(self.controller, dtype=float))
        u_ref = np.asarray(self.u_ref, dtype=float).reshape(-1)
        n_samples = len(times)
        if n_samples < 2 or np.any(np.diff(times) <= 0):
            raise ConfigError("funnel times must be strictly increasing with at least two samples")
        if S.shape != P.shape or S.shape[0] != n_samples or S.shape[1] != S.shape[2]:
            raise ConfigError("S and P must be (samples, n, n)")
        if len(r) != n_samples or len(u_ref) != n_samples or len(controller) != n_samples:
            raise ConfigError("one level, reference input and controller row per sample required")
        outputs = tuple(int(k) for k in self.output_indices)
        if controller.shape[1] != 1 + len(outputs):
            raise ConfigError("controller rows must be [offset, one gain per output]")
        if any(k < 0 or k >= S.shape[1] for k in outputs):
            raise ConfigError(f"output indices {outputs} outside the state")
        if np.any(r <= 0) or abs(r[-1] - 1.0) > 1e-9:
            raise ConfigError("funnel levels must be positive with r(tf) = 1")
        if np.abs(P[-1]).max() > 1e-9:
            raise ConfigError("funnel correction P must vanish at tf")
        limits = (float(self.limits[0]), float(self.limits[1]))
        if limits[0] > limits[1]:
            raise ConfigError("torque lower limit exceeds the upper limit")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "controller", controller)
        object.__setattr__(self, "u_ref", u_ref)
        object.__setattr__(self, "limits", limits)
        object.__setattr__(self, "output_indices", outputs)

    @property
    def n_states(self) -> int:
        return self.S.shape[1]

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def tf(self) -> float:
        return float(self.times[-1])

    @property
    def M(self) -> np.ndarray:
        """Full Lyapunov shapes S + P."""
        return self.S + self.P

    @property
    def goal(self) -> GoalSet:
        return GoalSet(self.S[-1], 1.0)

    def integral(self) -> float:
        """Trapezoidal integral of r over the horizon."""
        return float(np.trapezoid(self.r, self.times))

    def _check(self, t: float) -> None:
        if not self.times[0] - 1e-12 <= t <= self.times[-1] + 1e-12:
            raise HorizonError(f"t = {t} outside the funnel horizon [{self.t0}, {self.tf}]")

    def shape_at(self, t: float) -> np.ndarray:
        self._check(t)
        i, s = _interpolation(self.times, t)
        return (1 - s) * self.M[i] + s * self.M[i + 1]

    def level_at(self, t: float) -> float:
        self._check(t)
        return float(np.interp(t, self.times, self.r))

    def controller_at(self, t: float) -> np.ndarray:
        self._check(t)
        i, s = _interpolation(self.times, t)
        return (1 - s) * self.controller[i] + s * self.controller[i + 1]

    def gain_matrix(self) -> np.ndarray:
        """Controller gains scattered to full state width, (N+1, n); unread coordinates are 0."""
        gains = np.zeros((len(self.times), self.n_states))
        gains[:, list(self.output_indices)] = self.controller[:, 1:]
        return gains

    def feedback(self, t: float, xbar) -> float:
        """Deviation torque u-bar for a deviation state at time t."""
        coefficients = self.controller_at(t)
        y = np.asarray(xbar, dtype=float)[list(self.output_indices)]
        return float(coefficients[0] + coefficients[1:] @ y)

    def value(self, xbar, t: float) -> float:
        xbar = np.asarray(xbar, dtype=float)
        return float(xbar @ self.shape_at(t) @ xbar)


@dataclass(frozen=True)
class Certificates:
    """
    Multipliers proving the funnel, one entry per sample.

    ``Lw1``/``Lw2`` are None without an uncertainty box. ``Lt`` holds the three
    nonnegative time-interval multipliers per sample (zero at the end samples,
    where the time factor vanishes).
    """

    L: Tuple[Poly, ...]
    Lu1: Tuple[Poly, ...]
    Lu2: Tuple[Poly, ...]
    Lw1: Optional[Tuple[Poly, ...]]
    Lw2: Optional[Tuple[Poly, ...]]
    Lt: np.ndarray
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def max_degree(self) -> int:
        polys = list(self.L) + list(self.Lu1) + list(self.Lu2) + list(self.Lw1 or ()) + list(self.Lw2 or ())
        return max((p.degree for p in polys), default=-1)


def funnel_contains(funnel: Funnel, xbar, t: float) -> Tuple[bool, float]:
    """
    Membership of a deviation state in the funnel slice at time t.

    Returns:
        (contained, margin) with margin = r(t) - V(xbar, t)

    Raises:
        HorizonError: If t is outside the funnel horizon
    """
    margin = funnel.level_at(t) - funnel.value(xbar, t)
    return margin >= 0.0, margin


@dataclass(frozen=True)
class Ellipse:
    """{y : y^T shape y <= level} in a coordinate plane, centred at the origin."""

    dims: Tuple[int, int]
    shape: np.ndarray
    level: float

    def value(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(y @ self.shape @ y)

    def contains(self, y, tol: float = 0.0) -> bool:
        return self.value(y) <= self.level * (1.0 + tol)

    def boundary(self, points: int = BOUNDARY_POINTS) -> np.ndarray:
        """Points on the boundary, (points, 2), starting on the first principal axis."""
        eigenvalues, vectors = np.linalg.eigh(self.shape)
        angles = np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)
        circle = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        radii = np.sqrt(self.level / eigenvalues)
        return (circle * radii) @ vectors.T

    @property
    def semi_axes(self) -> np.ndarray:
        return np.sqrt(self.level / np.linalg.eigvalsh(self.shape))

    @property
    def area(self) -> float:
        return float(math.pi * self.level / math.sqrt(np.linalg.det(self.shape)))


def project_funnel(funnel: Funnel, t: float, dims: Sequence[int]) -> Ellipse:
    """
    Shadow of the funnel slice at t on the coordinate plane ``dims``.

    The projection of {x^T M x <= r} is {y^T (E M^-1 E^T)^-1 y <= r} with E the
    coordinate selector.

    Raises:
        NumericalFailure: If the slice shape is singular
        HorizonError: If t is outside the funnel horizon
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 2 or dims[0] == dims[1]:
        raise ConfigError("projection needs two distinct coordinates")
    M = funnel.shape_at(t)
    if np.linalg.cond(M) > 1e14:
        raise NumericalFailure(f"funnel shape is singular at t = {t}")
    inverse = np.linalg.inv(M)
    shadow = inverse[np.ix_(dims, dims)]
    shape = np.linalg.inv(0.5 * (shadow + shadow.T))
    return Ellipse(dims, 0.5 * (shape + shape.T), funnel.level_at(t))


def project_area(funnel: Funnel, t: float, dims: Sequence[int]) -> float:
    return project_funnel(funnel, t, dims).area


def _row(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def funnel_to_text(funnel: Funnel) -> str:
    n = funnel.n_states
    lines = [f"pybrach-funnel {FORMAT_VERSION}",
             f"samples {len(funnel.times)} states {n}",
             "outputs " + " ".join(str(k) for k in funnel.output_indices),
             f"limits {_row(funnel.limits)}",
             "uncertainty none" if funnel.uncertainty is None else
             f"uncertainty {_row((funnel.uncertainty.w_lb, funnel.uncertainty.w_ub))}"]
    for i, t in enumerate(funnel.times):
        lines += [f"t {t!r}",
                  f"r {funnel.r[i]!r}",
                  f"u_ref {funnel.u_ref[i]!r}",
                  f"controller {_row(funnel.controller[i])}"]
        lines += [f"S {_row(row)}" for row in funnel.S[i]]
        lines += [f"P {_row(row)}" for row in funnel.P[i]]
    return "\n".join(lines) + "\n"


def funnel_from_text(text: str) -> Funnel:
    lines = [line.split() for line in text.splitlines() if line.strip()]
    if not lines or lines[0][0] != "pybrach-funnel":
        raise ConfigError("not a funnel file")
    if int(lines[0][1]) != FORMAT_VERSION:
        raise ConfigError(f"unsupported funnel format version {lines[0][1]}")
    header = {fields[0]: fields[1:] for fields in lines[1:5]}
    try:
        outputs = tuple(int(k) for k in header["outputs"])
        limits = tuple(float(v) for v in header["limits"])
        uncertainty = None if header["uncertainty"] == ["none"] else \
            UncertaintyBox(*(float(v) for v in header["uncertainty"]))
    except KeyError as exc:
        raise ConfigError(f"funnel file lacks the {exc.args[0]} header") from None
    times: List[float] = []
    r: List[float] = []
    u_ref: List[float] = []
    controller: List[List[float]] = []
    S: List[list] = []
    P: List[list] = []
    for fields in lines[5:]:
        key, values = fields[0], [float(v) for v in fields[1:]]
        if key == "t":
            times.append(values[0])
            S.append([])
            P.append([])
        elif key == "r":
            r.append(values[0])
        elif key == "u_ref":
            u_ref.append(values[0])
        elif key == "controller":
            controller.append(values)
        elif key == "S":
            S[-1].append(values)
        elif key == "P":
            P[-1].append(values)
        else:
            raise ConfigError(f"unknown funnel record {key}")
    return Funnel(np.array(times), np.array(S), np.array(P), np.array(r), np.array(controller),
                  np.array(u_ref), limits, uncertainty, outputs)


def save_funnel(funnel: Funnel, path) -> None:
    Path(path).write_text(funnel_to_text(funnel))


def load_funnel(path) -> Funnel:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"funnel file not found: {path}")
    return funnel_from_text(path.read_text())
