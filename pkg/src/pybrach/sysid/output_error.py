"""
Output Error - Fit the three-spring cable model to a reference response.

Both the candidate spring model and the reference (normally the lumped-mass
cable) are driven by the same torque history. The cost compares the first
harmonics of the pivot-height spectrum, frequencies in Hz and amplitudes in
centimetres by default.
"""

from dataclasses import dataclass
import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from ..core.errors import ConfigError, DivergenceError, NumericalFailure
from ..core.event_bus import EventType, get_event_bus
from ..model.brachiator import dynamics_spring, static_equilibrium
from ..model.full_cable import cable_static_shape, dynamics_fullcable
from ..model.integrate import integrate
from ..model.params import CableSpringModel, FullCableModel, RobotParams
from ..model.trajectory import Trajectory
from .spectrum import HarmonicFit, Spectrum, compute_spectrum, extract_harmonics

logger = logging.getLogger(__name__)

InputSignal = Callable[[float, np.ndarray], float]

FULL_CABLE_MAX_STEP = 5e-4
SIMPLEX_STEP = 0.25


@dataclass(frozen=True)
class SysIdSettings:
    """Excitation window, integrator step and optimizer budget."""

    duration: float = 10.0
    sample_rate: float = 100.0
    dt: float = 2e-3
    harmonics: int = 3
    restarts: int = 3
    max_iterations: int = 400
    amplitude_scale: float = 100.0
    bound_scale: float = 3.0
    seed: int = 3

    @property
    def substeps(self) -> int:
        return max(1, int(round(1.0 / (self.sample_rate * self.dt))))


@dataclass(frozen=True)
class SysIdResult:
    """Best model found, its cost and the optimizer effort spent."""

    model: CableSpringModel
    cost: float
    iterations: int
    initial_cost: float
    converged: bool = True


def spring_response(cm: CableSpringModel, u_of_t: InputSignal, rp: RobotParams,
                    settings: SysIdSettings, joints=(0.0, 0.0)) -> np.ndarray:
    """
    Pivot-height samples of the spring model under the excitation torque.

    The robot starts at rest with the given joint angles and the pivot at the
    model's static equilibrium.
    """
    x0 = np.array([joints[0], joints[1], static_equilibrium(cm, rp), 0.0, 0.0, 0.0])
    traj = integrate(lambda x, u: dynamics_spring(x, u, 0.0, rp, cm), x0, u_of_t,
                     0.0, settings.duration, 1.0 / settings.sample_rate, settings.substeps)
    return traj.states[:, 2]


def fullcable_response(fc: FullCableModel, u_of_t: InputSignal, rp: RobotParams,
                       settings: SysIdSettings, joints=(0.0, 0.0)) -> np.ndarray:
    """Pivot-height samples of the robot on the lumped-mass cable, starting from static sag."""
    shape = cable_static_shape(fc, rp)
    z, zg = shape[:-1], shape[-1]
    robot = np.array([joints[0], joints[1], zg, 0.0, 0.0, 0.0])
    x0 = np.concatenate([robot, z, np.zeros(fc.n_nodes)])
    interval = 1.0 / settings.sample_rate
    substeps = max(1, math.ceil(interval / FULL_CABLE_MAX_STEP - 1e-9))
    traj = integrate(lambda x, u: dynamics_fullcable(x, u, fc, rp), x0, u_of_t,
                     0.0, settings.duration, interval, substeps)
    return traj.states[:, 2]


def response_harmonics(signal, settings: SysIdSettings) -> tuple[Spectrum, HarmonicFit]:
    spectrum = compute_spectrum(signal, 1.0 / settings.sample_rate)
    return spectrum, extract_harmonics(spectrum, settings.harmonics)


def harmonic_cost(candidate: HarmonicFit, reference: HarmonicFit,
                  amplitude_scale: float = 100.0) -> float:
    """
    Sum of squared frequency and (scaled) amplitude mismatches.

    When both fits carry the signal offset, its scaled mismatch enters as the
    zero-frequency term; the spring heights only show there.
    """
    f_hat, f = np.asarray(candidate.f), np.asarray(reference.f)
    a_hat, a = np.asarray(candidate.a), np.asarray(reference.a)
    cost = float(np.sum((f_hat - f) ** 2) + np.sum((amplitude_scale * (a_hat - a)) ** 2))
    if candidate.offset is not None and reference.offset is not None:
        cost += (amplitude_scale * (candidate.offset - reference.offset)) ** 2
    return cost


def output_error_cost(candidate: CableSpringModel, reference: HarmonicFit, u_of_t: InputSignal,
                      rp: RobotParams, settings: SysIdSettings, joints=(0.0, 0.0)) -> float:
    """
    Harmonic mismatch between a candidate spring model and the reference.

    Returns:
        The cost, or ``inf`` when the candidate diverges or shows too few peaks
    """
    try:
        signal = spring_response(candidate, u_of_t, rp, settings, joints)
        _, fit = response_harmonics(signal, settings)
    except (DivergenceError, NumericalFailure) as exc:
        logger.debug("candidate rejected: %s", exc)
        return math.inf
    return harmonic_cost(fit, reference, settings.amplitude_scale)


def default_bounds(initial: CableSpringModel, scale: float = 3.0) -> list[tuple[float, float]]:
    """Box bounds around an initial model: stiffness and damping within a factor, heights within 0.5 m."""
    if scale < 1.0:
        raise ConfigError("identification bound scale must be at least 1")
    bounds = [(k / scale, k * scale) for k in initial.k0]
    bounds += [(b / scale, b * scale) for b in initial.b]
    bounds += [(max(zc - 0.5, 1e-3), zc + 0.5) for zc in initial.zc]
    return bounds


class _AggregateCoordinates:
    """
    Map (log stiffness ratio, log damping ratio, height shift / HEIGHT_UNIT) to a spring model.

    The per-spring split of the initial model is kept: stiffness and damping
    scale uniformly and every height moves by the same amount, which moves the
    stiffness-weighted height by that amount too.
    """

    HEIGHT_UNIT = 0.1

    def __init__(self, initial: CableSpringModel, bounds: Sequence[tuple[float, float]]):
        self.k0 = np.asarray(initial.k0)
        self.b = np.asarray(initial.b)
        self.zc = np.asarray(initial.zc)
        lo = np.array([pair[0] for pair in bounds])
        hi = np.array([pair[1] for pair in bounds])
        damped = self.b > 0
        with np.errstate(divide="ignore"):
            k_lo, k_hi = np.log(lo[:3] / self.k0), np.log(hi[:3] / self.k0)
            b_lo, b_hi = np.log(lo[3:6][damped] / self.b[damped]), np.log(hi[3:6][damped] / self.b[damped])
        z_lo, z_hi = (lo[6:] - self.zc) / self.HEIGHT_UNIT, (hi[6:] - self.zc) / self.HEIGHT_UNIT
        self.lower = np.array([k_lo.max(), b_lo.max() if damped.any() else 0.0, z_lo.max()])
        self.upper = np.array([k_hi.min(), b_hi.min() if damped.any() else 0.0, z_hi.min()])

    def model(self, theta) -> CableSpringModel:
        theta = np.clip(theta, self.lower, self.upper)
        return CableSpringModel(tuple(self.k0 * math.exp(theta[0])), tuple(self.b * math.exp(theta[1])),
                                tuple(self.zc + self.HEIGHT_UNIT * theta[2]))


def _simplex(start, step, lower, upper) -> np.ndarray:
    """Axis-aligned starting simplex, stepping down wherever a step up would leave the box."""
    vertices = [start]
    for i in range(len(start)):
        vertex = start.copy()
        vertex[i] += step if start[i] + step <= upper[i] else -step
        vertices.append(np.clip(vertex, lower, upper))
    return np.array(vertices)


def fit_cable_model(reference: HarmonicFit, initial: CableSpringModel,
                    bounds: Optional[Sequence[tuple[float, float]]], u_of_t: InputSignal,
                    rp: RobotParams, settings: SysIdSettings = SysIdSettings(),
                    joints=(0.0, 0.0)) -> SysIdResult:
    """
    Bounded Nelder-Mead search for the spring model matching the reference harmonics.

    The springs act in parallel on one coordinate, so the response only sees the
    total stiffness, the total damping and the stiffness-weighted height. The
    search runs over exactly those three aggregates, stiffness and damping on a
    log scale, and keeps the initial model's split between the springs. Restarts
    begin from randomly perturbed copies of the best point. The best point ever
    evaluated is returned, so the result never costs more than the initial model.

    Args:
        reference: Harmonics of the reference response
        initial: Starting model, must lie within bounds; zero damping stays zero
        bounds: Nine (low, high) pairs for k0, b, zc; None for ``default_bounds``
        u_of_t: Excitation torque
        rp: Robot parameters
        settings: Window, step and optimizer budget
        joints: Initial joint angles of the excitation run

    Returns:
        SysIdResult; ``converged`` tells whether the run that found the best
        point met its tolerances within the iteration budget

    Raises:
        ConfigError: If the initial model lies outside the bounds
    """
    bus = get_event_bus()
    bounds = list(bounds) if bounds is not None else default_bounds(initial, settings.bound_scale)
    x_init = initial.as_vector()
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    if len(bounds) != 9 or np.any(x_init < lo) or np.any(x_init > hi):
        raise ConfigError("initial cable model outside identification bounds")
    coordinates = _AggregateCoordinates(initial, bounds)

    best = {"theta": np.zeros(3), "cost": math.inf, "run": 0}
    run = 0
    evaluations = 0

    def objective(theta):
        nonlocal evaluations
        cost = output_error_cost(coordinates.model(theta), reference, u_of_t, rp, settings, joints)
        evaluations += 1
        if cost < best["cost"]:
            best.update(theta=np.clip(theta, coordinates.lower, coordinates.upper), cost=cost, run=run)
        bus.emit(EventType.SYSID_EVALUATION, evaluation=evaluations, cost=cost, best=best["cost"])
        return cost if math.isfinite(cost) else 1e12

    initial_cost = objective(np.zeros(3))
    logger.info("identification start: cost %.6g", initial_cost)
    if initial_cost <= 1e-10:
        return SysIdResult(initial, initial_cost, 0, initial_cost, True)

    rng = np.random.default_rng(settings.seed)
    box = optimize.Bounds(coordinates.lower, coordinates.upper)
    iterations = 0
    converged = []
    start = np.zeros(3)
    for run in range(settings.restarts + 1):
        step = SIMPLEX_STEP / (run + 1)
        simplex = _simplex(start, step, coordinates.lower, coordinates.upper)
        result = optimize.minimize(objective, start, method="Nelder-Mead", bounds=box,
                                   options={"maxiter": settings.max_iterations, "initial_simplex": simplex,
                                            "xatol": 1e-4, "fatol": 1e-10})
        iterations += int(result.nit)
        converged.append(bool(result.success))
        logger.info("identification run %d: cost %.6g after %d iterations", run, best["cost"], result.nit)
        start = np.clip(best["theta"] + step * rng.uniform(-0.5, 0.5, 3), coordinates.lower, coordinates.upper)

    model = coordinates.model(best["theta"])
    logger.info("identified aggregates: stiffness %.6g, damping %.6g, height %.6g", *model.equivalent())
    return SysIdResult(model, best["cost"], iterations, initial_cost, converged[best["run"]])


def swing_excitation(reference: Trajectory) -> InputSignal:
    """Open-loop torque of a reference swing, zero once the swing is over."""

    def u_of_t(t: float, x=None) -> float:
        if t < reference.t0 or t >= reference.tf:
            return 0.0
        return reference.input_at(t)

    return u_of_t
