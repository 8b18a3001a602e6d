"""
Monte Carlo - Closed-loop trials from random starts inside the funnel.

Initial deviations are drawn by rejection sampling: uniform in the bounding box
of the initial ellipsoid, kept when V(x, t0) <= r(t0) * radius_scale^2. All
random draws happen up front from one seeded generator, so the outcome does not
depend on the number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError, DivergenceError
from ..core.event_bus import EventType, get_event_bus
from ..funnel.model import Funnel
from ..model.params import UncertaintyBox
from ..model.trajectory import Trajectory
from .closed_loop import ClosedLoopResult, SimulationSettings, simulate_closed_loop
from .plants import Plant

logger = logging.getLogger(__name__)

MAX_REJECTIONS = 100000


def sample_initial_deviations(funnel: Funnel, count: int, rng: np.random.Generator,
                              radius_scale: float = 1.0) -> np.ndarray:
    """
    Deviations inside the scaled initial funnel slice, (count, n).

    Raises:
        ConfigError: For a negative count or radius scale
    """
    if count < 0 or radius_scale < 0:
        raise ConfigError("sample count and radius scale must be non-negative")
    n = funnel.n_states
    if radius_scale == 0.0:
        return np.zeros((count, n))
    M0, level = funnel.M[0], funnel.r[0] * radius_scale ** 2
    half_widths = np.sqrt(level * np.diag(np.linalg.inv(M0)))
    samples = []
    for _ in range(MAX_REJECTIONS):
        if len(samples) == count:
            break
        x = rng.uniform(-half_widths, half_widths)
        if x @ M0 @ x <= level:
            samples.append(x)
    else:
        raise ConfigError("rejection sampling failed to fill the initial funnel slice")
    return np.array(samples).reshape(count, n)


@dataclass(frozen=True)
class TrialOutcome:
    index: int
    deviation: np.ndarray
    w: Optional[float]
    result: Optional[ClosedLoopResult]
    diverged_at: Optional[float] = None

    @property
    def reached_goal(self) -> bool:
        return self.result is not None and self.result.reached_goal

    @property
    def contained(self) -> bool:
        return self.result is not None and self.result.always_contained


@dataclass(frozen=True)
class MonteCarloSummary:
    trials: Tuple[TrialOutcome, ...]

    @property
    def goal_rate(self) -> float:
        return sum(t.reached_goal for t in self.trials) / max(len(self.trials), 1)

    @property
    def containment_rate(self) -> float:
        return sum(t.contained for t in self.trials) / max(len(self.trials), 1)

    def excursions(self, reference: Trajectory) -> np.ndarray:
        """Largest |deviation| per state coordinate over all completed trials."""
        worst = np.zeros(reference.states.shape[1])
        for trial in self.trials:
            if trial.result is None:
                continue
            traj = trial.result.trajectory
            deviation = traj.states - np.array([reference.state_at(t) for t in traj.times])
            worst = np.maximum(worst, np.abs(deviation).max(axis=0))
        return worst

    def to_text(self) -> str:
        lines = ["# trial w reached_goal contained max_abs_u"]
        for trial in self.trials:
            w = "nan" if trial.w is None else repr(float(trial.w))
            torque = trial.result.max_abs_torque if trial.result is not None else math.nan
            lines.append(f"{trial.index} {w} {int(trial.reached_goal)} {int(trial.contained)} {torque!r}")
        lines.append(f"# goal_rate {self.goal_rate!r} containment_rate {self.containment_rate!r}")
        return "\n".join(lines) + "\n"


def monte_carlo(funnel: Funnel, reference: Trajectory, plant_for: Callable[[Optional[float]], Plant],
                count: int, seed: int, settings: SimulationSettings = SimulationSettings(),
                uncertainty: Optional[UncertaintyBox] = None, radius_scale: float = 1.0,
                threads: int = 1) -> MonteCarloSummary:
    """
    Run closed-loop trials from random initial deviations.

    Args:
        funnel: Funnel whose controller is simulated
        reference: Reference trajectory of the funnel
        plant_for: Builds the plant for a sampled stiffness uncertainty (None when no box is given)
        count: Number of trials
        seed: Seed of the generator drawing deviations and uncertainties
        settings: Closed-loop simulation settings
        uncertainty: Box to draw w from, or None
        radius_scale: Scale of the initial slice the deviations are drawn from
        threads: Worker threads

    Returns:
        MonteCarloSummary; a diverging trial counts as a failure
    """
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    rng = np.random.default_rng(seed)
    deviations = sample_initial_deviations(funnel, count, rng, radius_scale)
    ws: Sequence[Optional[float]] = (
        [float(w) for w in uncertainty.sample(rng, size=count)] if uncertainty is not None else [None] * count)
    bus = get_event_bus()

    def run(index: int) -> TrialOutcome:
        x0 = reference.initial_state + deviations[index]
        try:
            result = simulate_closed_loop(plant_for(ws[index]), funnel, reference, x0, settings)
            outcome = TrialOutcome(index, deviations[index], ws[index], result)
        except DivergenceError as exc:
            logger.warning("trial %d diverged at t = %.4f", index, exc.time)
            outcome = TrialOutcome(index, deviations[index], ws[index], None, exc.time)
        bus.emit(EventType.TRIAL_COMPLETED, index=index, reached_goal=outcome.reached_goal,
                 contained=outcome.contained)
        return outcome

    with ThreadPoolExecutor(max_workers=threads) as pool:
        trials = tuple(pool.map(run, range(count)))
    summary = MonteCarloSummary(trials)
    logger.info("Monte Carlo: %d trials, goal %.0f%%, contained %.0f%%",
                count, 100 * summary.goal_rate, 100 * summary.containment_rate)
    return summary
