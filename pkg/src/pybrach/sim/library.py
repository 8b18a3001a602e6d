"""
Library - Certified swings from several initial conditions, and the executive
that chains them into continuous brachiation.

Every entry shares the goal set x^T Qf x <= 1 at its final time, so a swing
ending in the goal lands (after the grip exchange) near the start of some
entry. Selection picks the entry whose initial funnel slice holds the current
state with the largest margin.
"""

from dataclasses import dataclass, replace
import logging
import math
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..control.tvlqr import (LqrWeights, RiccatiSolution, linearize, load_riccati, riccati_backward,
                             save_riccati)
from ..core.errors import ConfigError, MissingInputError, NotCertifiedError, PybrachError
from ..core.event_bus import EventType, get_event_bus
from ..funnel.model import Funnel, load_funnel, save_funnel
from ..funnel.synthesis import SynthesisProblem, SynthesisSettings, synthesize
from ..model.brachiator import dynamics_spring
from ..model.integrate import integrate
from ..model.params import OUTPUT_INDICES, CableSpringModel, RobotParams, State, UncertaintyBox
from ..model.trajectory import Trajectory
from .closed_loop import ClosedLoopResult, SimulationSettings, simulate_closed_loop
from .collocation import ReferenceSettings, generate_reference
from .plants import Plant

logger = logging.getLogger(__name__)

THETA1_RANGE = (-48.0, -42.0)
THETA2_RANGE = (-100.0, -80.0)
# (zg offset m, dzg m/s) tried after the nominal pivot
PIVOT_VARIANTS = ((0.0, 0.0), (0.01, 0.0), (-0.01, 0.0), (0.0, 0.1), (0.0, -0.1))


@dataclass(frozen=True)
class LibraryEntry:
    id: str
    reference: Trajectory
    funnel: Funnel
    riccati: Optional[RiccatiSolution] = None

    def __post_init__(self):
        if abs(self.reference.t0 - self.funnel.t0) > 1e-9 or abs(self.reference.tf - self.funnel.tf) > 1e-9:
            raise ConfigError(f"entry {self.id}: funnel and reference horizons differ")

    def margin(self, robot_state) -> float:
        """r(t0) - V(x - x_ref(t0), t0); positive inside the initial slice."""
        xbar = np.asarray(robot_state, dtype=float)[:6] - self.reference.initial_state
        return self.funnel.r[0] - self.funnel.value(xbar, self.funnel.t0)


def library_initial_conditions(base: State, size: int) -> List[State]:
    """
    Initial states spread over the default angle grid and pivot variants.

    The grid is ordered by distance from the middle of the angle ranges, so the
    first entry is the nominal start; pivot variants cycle once the angles run out.
    """
    if size < 1:
        raise ConfigError("library size must be at least 1")
    th1 = np.linspace(*THETA1_RANGE, 3)
    th2 = np.linspace(*THETA2_RANGE, 3)
    centre = (np.mean(THETA1_RANGE), np.mean(THETA2_RANGE))
    angles = sorted(((a, b) for a in th1 for b in th2),
                    key=lambda p: (p[0] - centre[0]) ** 2 + ((p[1] - centre[1]) / 2) ** 2)
    states = []
    for k in range(size):
        a, b = angles[k % len(angles)]
        dz, dv = PIVOT_VARIANTS[(k // len(angles)) % len(PIVOT_VARIANTS)]
        states.append(State(math.radians(a), math.radians(b), base.zg + dz,
                            base.dtheta1, base.dtheta2, base.dzg + dv))
    return states


def build_entry(entry_id: str, reference: Trajectory, rp: RobotParams, cm: CableSpringModel,
                weights: LqrWeights, settings: SynthesisSettings, limits: Tuple[float, float],
                uncertainty: Optional[UncertaintyBox] = None,
                output_indices: Sequence[int] = OUTPUT_INDICES) -> LibraryEntry:
    """TVLQR and funnel synthesis around one reference on the spring model."""
    times = np.linspace(reference.t0, reference.tf, settings.n_samples + 1)
    nominal = lambda x, u: dynamics_spring(x, u, 0.0, rp, cm)
    riccati = riccati_backward(linearize(nominal, reference, times), weights)
    problem = SynthesisProblem.from_reference(
        lambda x, u, w: dynamics_spring(x, u, w, rp, cm), reference, riccati, limits, uncertainty,
        settings, output_indices)
    result = synthesize(problem, settings)
    return LibraryEntry(entry_id, reference, result.funnel, riccati)


def build_library(initial_conditions: Sequence[State], base: ReferenceSettings, rp: RobotParams,
                  cm: CableSpringModel, weights: LqrWeights, settings: SynthesisSettings,
                  limits: Tuple[float, float], uncertainty: Optional[UncertaintyBox] = None,
                  output_indices: Sequence[int] = OUTPUT_INDICES) -> List[LibraryEntry]:
    """
    One certified entry per initial condition; failures are logged and skipped.

    Raises:
        NotCertifiedError: If no entry could be built
    """
    bus = get_event_bus()
    entries = []
    for k, initial in enumerate(initial_conditions):
        entry_id = f"swing{k:02d}"
        try:
            reference = generate_reference(replace(base, initial=initial), rp, cm)
            entry = build_entry(entry_id, reference, rp, cm, weights, settings, limits,
                                uncertainty, output_indices)
        except PybrachError as exc:
            logger.warning("library entry %s skipped: %s", entry_id, exc)
            bus.emit(EventType.ENTRY_SKIPPED, id=entry_id, reason=str(exc))
            continue
        entries.append(entry)
        bus.emit(EventType.ENTRY_BUILT, id=entry_id, integral=entry.funnel.integral())
    if not entries:
        raise NotCertifiedError("no library entry could be certified")
    return entries


def select_trajectory(library: Sequence[LibraryEntry], robot_state) -> LibraryEntry:
    """
    Entry whose initial funnel slice contains the state with the largest margin.

    Raises:
        NotCertifiedError: If no entry has a positive margin; diagnostics carry
            the best margin and its entry
    """
    if not library:
        raise ConfigError("empty trajectory library")
    margins = [entry.margin(robot_state) for entry in library]
    best = int(np.argmax(margins))
    if margins[best] <= 0.0:
        raise NotCertifiedError("state lies outside every library funnel",
                                {"best_margin": margins[best], "best_entry": library[best].id})
    logger.debug("selected %s with margin %.4g", library[best].id, margins[best])
    return library[best]


@dataclass(frozen=True)
class SwingChain:
    results: Tuple[ClosedLoopResult, ...]
    entries: Tuple[str, ...]
    exchanges: Tuple[State, ...]
    completed: bool
    reason: str = ""
    pause: float = 0.0

    @property
    def swings(self) -> int:
        return len(self.results)


def _pause(plant: Plant, x: np.ndarray, duration: float, dt: float) -> np.ndarray:
    x = x.copy()
    x[3:5] = 0.0
    if duration <= 0:
        return x
    held = integrate(lambda s, u: plant.hold_dynamics(s), x, None, 0.0, duration, dt,
                     substeps=plant.substeps(dt))
    return held.final_state


def continuous_brachiation(library: Sequence[LibraryEntry], plant: Plant, x0, n_swings: int,
                           pause: float = 1.0,
                           settings: SimulationSettings = SimulationSettings(),
                           select: Callable[[Sequence[LibraryEntry], np.ndarray], LibraryEntry] = select_trajectory
                           ) -> SwingChain:
    """
    Swing, pause with both grippers on the cable, exchange grip, repeat.

    The chain stops early, without raising, when a swing misses its goal, when
    no entry contains the post-exchange state or when the pivot would leave the
    cable. With a single swing this is one closed-loop simulation.
    """
    if n_swings < 1:
        raise ConfigError("at least one swing is required")
    bus = get_event_bus()
    x = np.asarray(x0, dtype=float)
    if x.size == 6:
        x = plant.embed(x)
    results, ids, exchanges = [], [], []

    def finish(completed: bool, reason: str = "") -> SwingChain:
        return SwingChain(tuple(results), tuple(ids), tuple(exchanges), completed, reason, pause)

    for k in range(n_swings):
        try:
            entry = select(library, plant.robot_state(x))
        except NotCertifiedError as exc:
            return finish(False, f"swing {k}: {exc}")
        result = simulate_closed_loop(plant, entry.funnel, entry.reference, x, settings)
        results.append(result)
        ids.append(entry.id)
        bus.emit(EventType.SWING_COMPLETED, swing=k, entry=entry.id, reached_goal=result.reached_goal)
        logger.info("swing %d on %s: goal %s", k, entry.id, "reached" if result.reached_goal else "missed")
        if not result.reached_goal:
            return finish(False, f"swing {k} missed its goal")
        if k == n_swings - 1:
            break
        x = _pause(plant, result.plant_state, pause, settings.dt)
        try:
            plant, x = plant.exchange(x)
        except ConfigError as exc:
            return finish(False, f"swing {k}: {exc}")
        exchanges.append(State.from_vector(plant.robot_state(x)))
    return finish(True)


def save_library(library: Sequence[LibraryEntry], directory) -> None:
    """One sub-directory per entry holding its reference, funnel and Riccati files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for entry in library:
        folder = directory / entry.id
        folder.mkdir(exist_ok=True)
        entry.reference.save(folder / "reference.txt")
        save_funnel(entry.funnel, folder / "funnel.txt")
        if entry.riccati is not None:
            save_riccati(entry.riccati, folder / "riccati.txt")
    (directory / "index.txt").write_text("".join(f"{entry.id}\n" for entry in library))


def load_library(directory) -> List[LibraryEntry]:
    directory = Path(directory)
    index = directory / "index.txt"
    if not index.exists():
        raise MissingInputError(f"library index not found: {index}")
    entries = []
    for entry_id in index.read_text().split():
        folder = directory / entry_id
        riccati = load_riccati(folder / "riccati.txt") if (folder / "riccati.txt").exists() else None
        entries.append(LibraryEntry(entry_id, Trajectory.load(folder / "reference.txt"),
                                    load_funnel(folder / "funnel.txt"), riccati))
    return entries
