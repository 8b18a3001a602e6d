"""
Integrate - Fixed-step fourth-order Runge-Kutta with zero-order-hold input.
"""

import logging
from typing import Callable, Optional

import numpy as np

from ..core.errors import ConfigError, DivergenceError
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

Dynamics = Callable[[np.ndarray, float], np.ndarray]
InputSignal = Callable[[float, np.ndarray], float]


def zero_input(t: float, x: np.ndarray) -> float:
    return 0.0


def rk4_step(f: Dynamics, x: np.ndarray, u: float, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of length h with u held constant."""
    k1 = f(x, u)
    k2 = f(x + 0.5 * h * k1, u)
    k3 = f(x + 0.5 * h * k2, u)
    k4 = f(x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(f: Dynamics, x0, u_of_t: Optional[InputSignal], t0: float, tf: float,
              dt: float, substeps: int = 1) -> Trajectory:
    """
    Integrate x' = f(x, u) from t0 to tf.

    The input is sampled once per output interval, at its start, and held over
    the interval; each interval may be split into ``substeps`` RK4 steps.

    Args:
        f: Dynamics ``f(x, u) -> x'``
        x0: Initial state
        u_of_t: Input law ``u(t, x)``; None means zero input
        t0: Start time, s
        tf: End time, s
        dt: Output sampling interval, s
        substeps: RK4 steps per sampling interval

    Returns:
        Trajectory sampled at t0, t0 + dt, ... with the last step shortened to land on tf

    Raises:
        ConfigError: If dt <= 0, tf <= t0 or substeps < 1
        DivergenceError: If the state becomes non-finite
    """
    if dt <= 0 or tf <= t0 or substeps < 1:
        raise ConfigError("integrate needs dt > 0, tf > t0 and substeps >= 1")
    u_of_t = u_of_t or zero_input
    n = int(np.ceil((tf - t0) / dt - 1e-9))
    times = np.minimum(t0 + dt * np.arange(n + 1), tf)
    times[-1] = tf
    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((n + 1, x.size))
    inputs = np.empty(n)
    states[0] = x
    for i in range(n):
        u = float(u_of_t(times[i], x))
        h = (times[i + 1] - times[i]) / substeps
        for _ in range(substeps):
            x = rk4_step(f, x, u, h)
        if not np.all(np.isfinite(x)):
            logger.debug("integration diverged on step %d", i)
            raise DivergenceError(float(times[i + 1]))
        states[i + 1] = x
        inputs[i] = u
    return Trajectory(times, states, inputs)
