"""
Validate - Check a certified funnel against the true (non-polynomial) dynamics.

Random points are drawn on the funnel boundary V = r at the sample times, with
random uncertainty from the box. At each, the exact closed-loop V' is compared
with r' and the commanded torque with the limits.
"""

from dataclasses import dataclass
import logging
import math
from typing import Callable, Optional

import numpy as np

from ..core.errors import ConfigError
from ..model.trajectory import Trajectory
from .model import Funnel

logger = logging.getLogger(__name__)

STRICT_FRACTION = 0.99
EXCESS_TOLERANCE = 1e-3
TORQUE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of boundary sampling; ``worst_excess`` is max(V' - r')."""

    samples: int
    strict_fraction: float
    worst_excess: float
    torque_violations: int
    worst_sample_time: float = math.nan

    @property
    def passed(self) -> bool:
        return (self.strict_fraction >= STRICT_FRACTION and self.worst_excess < EXCESS_TOLERANCE
                and self.torque_violations == 0)


def _rates(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    for i in range(len(times)):
        lo, hi = max(i - 1, 0), min(i + 1, len(times) - 1)
        out[i] = (values[hi] - values[lo]) / (times[hi] - times[lo])
    return out


def validate_funnel(funnel: Funnel, dynamics: Callable[[np.ndarray, float, float], np.ndarray],
                    reference: Trajectory, samples: int = 1000,
                    rng: Optional[np.random.Generator] = None) -> ValidationReport:
    """
    Sample the invariance and torque conditions of a funnel.

    Args:
        funnel: Certified funnel
        dynamics: True dynamics ``f(x, u, w)``
        reference: Reference trajectory the funnel is built around
        samples: Number of boundary samples
        rng: Random generator (a fresh default generator when None)

    Returns:
        ValidationReport; ``passed`` requires V' < r' on at least 99% of the
        samples, V' < r' + 1e-3 on all of them, and no torque violations
    """
    if samples < 1:
        raise ConfigError("validation needs at least one sample")
    rng = rng or np.random.default_rng()
    times = funnel.times
    M = funnel.M
    M_rate = _rates(M, times)
    r_rate = _rates(funnel.r, times)
    outputs = list(funnel.output_indices)
    u_min, u_max = funnel.limits
    strict = 0
    worst, worst_time = -math.inf, math.nan
    violations = 0
    for _ in range(samples):
        i = int(rng.integers(len(times)))
        direction = rng.standard_normal(funnel.n_states)
        xbar = direction * math.sqrt(funnel.r[i] / float(direction @ M[i] @ direction))
        w = funnel.uncertainty.sample(rng) if funnel.uncertainty is not None else 0.0
        x_ref = reference.state_at(times[i])
        u_ref = funnel.u_ref[i]
        u_bar = float(funnel.controller[i, 0] + funnel.controller[i, 1:] @ xbar[outputs])
        flow = np.asarray(dynamics(x_ref + xbar, u_ref + u_bar, w)) - np.asarray(dynamics(x_ref, u_ref, 0.0))
        vdot = 2.0 * xbar @ M[i] @ flow + xbar @ M_rate[i] @ xbar
        excess = float(vdot - r_rate[i])
        strict += excess < 0.0
        if excess > worst:
            worst, worst_time = excess, float(times[i])
        u = u_ref + u_bar
        if u < u_min - TORQUE_TOLERANCE or u > u_max + TORQUE_TOLERANCE:
            violations += 1
    report = ValidationReport(samples, strict / samples, worst, violations, worst_time)
    logger.info("funnel validation: %.1f%% strict, worst excess %.3g at t = %.3f, %d torque violations",
                100.0 * report.strict_fraction, worst, worst_time, violations)
    return report
