"""
Config - Flat ``section.key=value`` configuration with environment overrides.

Every key has a typed default below; a config file only lists what it changes.
Vectors are comma-separated numbers, booleans ``true``/``false``. Any key can be
overridden from the environment as ``PYBRACH_<SECTION>__<KEY>``.

Joint angles in the ``trajectory`` section are given in degrees and joint rates
in deg/s; everything else is SI.
"""

import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from .errors import ConfigError, MissingInputError

logger = logging.getLogger(__name__)

ENV_PREFIX = "PYBRACH_"

SEED_OFFSETS = {"simulation": 0, "montecarlo": 1, "library": 2, "sysid": 3, "validation": 4}

DEFAULTS: Dict[str, Any] = {
    # Robot (prototype measurements)
    "robot.m0": 1.247,
    "robot.m1": 0.794,
    "robot.m2": 0.794,
    "robot.l1": 0.35,
    "robot.l2": 0.35,
    "robot.d1": 0.15,
    "robot.d2": 0.2,
    "robot.i1": 0.0088,
    "robot.i2": 0.0088,
    "robot.g": 9.81,
    # Identified three-spring cable
    "cable.k0": (76.74, 180.50, 279.14),
    "cable.b": (4.25, 4.72, 4.88),
    "cable.zc": (2.00, 2.04, 2.06),
    # Lumped-mass reference cable
    "fullcable.lc": 8.0,
    "fullcable.mc": 0.25,
    "fullcable.kc": 785400.0,
    "fullcable.bc": 4.0,
    "fullcable.n_nodes": 17,
    "fullcable.attach_index": 8,
    "fullcable.junction_k": 1.0e5,
    "fullcable.junction_b": 50.0,
    "fullcable.prestretch": 1.8e-3,
    "fullcable.anchor_height": 2.0,
    "fullcable.attached": True,
    # Stiffness uncertainty
    "uncertainty.w_lb": -0.2,
    "uncertainty.w_ub": 0.2,
    # TVLQR weights (diagonals)
    "lqr.q": (10.0, 10.0, 1.0, 1.0, 1.0, 1.0),
    "lqr.qf": (100.0, 100.0, 10.0, 1.0, 1.0, 10.0),
    "lqr.r": 1.0,
    # Funnel synthesis
    "synthesis.n_samples": 40,
    "synthesis.dynamics_degree": 3,
    "synthesis.multiplier_degree": 4,
    "synthesis.torque_multiplier_degree": 0,
    "synthesis.u_min": -5.0,
    "synthesis.u_max": 5.0,
    "synthesis.max_rounds": 30,
    "synthesis.convergence": 1e-3,
    "synthesis.epsilon": 1e-4,
    "synthesis.r_min": 1e-6,
    "synthesis.gamma_tolerance": 1e-6,
    "synthesis.level_rates": (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0),
    "synthesis.solver": "CLARABEL",
    "synthesis.tolerance": 1e-7,
    "synthesis.max_iters": 200,
    "synthesis.taylor_step": 2e-2,
    # Reference trajectory (degrees, deg/s, m, m/s)
    "trajectory.initial": (-45.0, -90.0, 1.84, 0.0, 0.0, 0.0),
    "trajectory.final": (45.0, 90.0, 1.9, 120.0, 120.0, 0.0),
    "trajectory.pivot_at_equilibrium": True,
    "trajectory.horizon": 0.7,
    "trajectory.mesh": 35,
    "trajectory.u_bound": 5.0,
    "trajectory.pivot_weight": 100.0,
    "trajectory.off_nominal": (3.0, -10.0, 0.01, -10.0, 20.0, 0.1),
    # Identification
    "sysid.duration": 10.0,
    "sysid.sample_rate": 100.0,
    "sysid.dt": 2e-3,
    "sysid.harmonics": 3,
    "sysid.restarts": 3,
    "sysid.max_iterations": 400,
    "sysid.amplitude_scale": 100.0,
    "sysid.bound_scale": 3.0,
    # Simulation
    "simulation.dt": 1e-3,
    "simulation.seed": 0,
    "simulation.plant": "fullcable",
    "simulation.stiffness_scale": 0.8,
    "simulation.w": -0.2,
    "simulation.saturate": True,
    "simulation.trials": 20,
    "simulation.validation_samples": 1000,
    "simulation.library_size": 10,
    "simulation.n_swings": 5,
    "simulation.pause": 1.0,
    "simulation.radius_scale": 1.0,
    # Paths
    "paths.out": "out",
    "paths.database": "",
}


def _parse(key: str, raw: str) -> Any:
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered not in ("true", "false"):
                raise ValueError(raw)
            return lowered == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(part) for part in raw.split(",") if part.strip())
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {key}={raw!r}") from None


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


class Config:
    """
    Typed, flat configuration.

    Values are stored with the type of their default; accessor methods build the
    domain objects each subsystem consumes.
    """

    def __init__(self, values: Optional[Mapping[str, Any]] = None):
        self._values: Dict[str, Any] = dict(DEFAULTS)
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key: str, value: Any) -> None:
        key = key.strip().lower()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        self._values[key] = _parse(key, value) if isinstance(value, str) else self._coerce(key, value)

    @staticmethod
    def _coerce(key: str, value: Any) -> Any:
        default = DEFAULTS[key]
        if isinstance(default, tuple):
            return tuple(float(v) for v in value)
        return type(default)(value)

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self._values.get(key, default)

    def __eq__(self, other) -> bool:
        return isinstance(other, Config) and self._values == other._values

    def items(self):
        return sorted(self._values.items())

    @classmethod
    def loads(cls, text: str) -> "Config":
        config = cls()
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {number}: expected key=value")
            config.set(key, value)
        return config

    @classmethod
    def load(cls, path, environ: Optional[Mapping[str, str]] = None) -> "Config":
        """Read a config file (None for defaults only) and apply environment overrides."""
        if path is None:
            config = cls()
        else:
            path = Path(path)
            if not path.exists():
                raise MissingInputError(f"config file not found: {path}")
            config = cls.loads(path.read_text())
        config.apply_env(os.environ if environ is None else environ)
        return config

    def dumps(self) -> str:
        return "".join(f"{key}={_format(value)}\n" for key, value in self.items())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    def apply_env(self, environ: Mapping[str, str]) -> None:
        for name, value in environ.items():
            if not name.upper().startswith(ENV_PREFIX):
                continue
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            if key in DEFAULTS:
                logger.debug("config override from environment: %s", key)
                self.set(key, value)

    def seed_for(self, subsystem: str) -> int:
        """Seed of a subsystem, derived from ``simulation.seed`` by a fixed offset."""
        try:
            return self["simulation.seed"] + SEED_OFFSETS[subsystem]
        except KeyError:
            raise ConfigError(f"no seed offset for {subsystem}") from None

    # Typed accessors

    def robot_params(self):
        from ..model.params import RobotParams
        v = self._values
        return RobotParams(v["robot.m0"], v["robot.m1"], v["robot.m2"], v["robot.l1"],
                           v["robot.l2"], v["robot.d1"], v["robot.d2"], v["robot.i1"],
                           v["robot.i2"], v["robot.g"])

    def spring_model(self):
        from ..model.params import CableSpringModel
        return CableSpringModel(self["cable.k0"], self["cable.b"], self["cable.zc"])

    def full_cable(self):
        from ..model.params import FullCableModel
        return FullCableModel(**{key.split(".", 1)[1]: value for key, value in self.items()
                                 if key.startswith("fullcable.")})

    def uncertainty(self):
        from ..model.params import UncertaintyBox
        return UncertaintyBox(self["uncertainty.w_lb"], self["uncertainty.w_ub"])

    def lqr_weights(self):
        from ..control.tvlqr import LqrWeights
        return LqrWeights.diagonal(self["lqr.q"], self["lqr.qf"], self["lqr.r"])

    def synthesis_settings(self, threads: int = 1):
        from ..funnel.synthesis import SynthesisSettings
        v = self._values
        return SynthesisSettings(
            n_samples=v["synthesis.n_samples"],
            dynamics_degree=v["synthesis.dynamics_degree"],
            multiplier_degree=v["synthesis.multiplier_degree"],
            torque_multiplier_degree=v["synthesis.torque_multiplier_degree"],
            max_rounds=v["synthesis.max_rounds"],
            convergence=v["synthesis.convergence"],
            epsilon=v["synthesis.epsilon"],
            r_min=v["synthesis.r_min"],
            gamma_tolerance=v["synthesis.gamma_tolerance"],
            level_rates=v["synthesis.level_rates"],
            solver=v["synthesis.solver"],
            tolerance=v["synthesis.tolerance"],
            max_iters=v["synthesis.max_iters"],
            taylor_step=v["synthesis.taylor_step"],
            threads=threads,
        )

    def torque_limits(self) -> tuple[float, float]:
        u_min, u_max = self["synthesis.u_min"], self["synthesis.u_max"]
        if u_min > u_max:
            raise ConfigError("synthesis.u_min exceeds synthesis.u_max")
        return u_min, u_max

    def sysid_settings(self):
        from ..sysid.output_error import SysIdSettings
        v = self._values
        return SysIdSettings(
            duration=v["sysid.duration"],
            sample_rate=v["sysid.sample_rate"],
            dt=v["sysid.dt"],
            harmonics=v["sysid.harmonics"],
            restarts=v["sysid.restarts"],
            max_iterations=v["sysid.max_iterations"],
            amplitude_scale=v["sysid.amplitude_scale"],
            bound_scale=v["sysid.bound_scale"],
            seed=self.seed_for("sysid"),
        )

    def reference_settings(self):
        from ..sim.collocation import ReferenceSettings
        from ..model.brachiator import static_equilibrium
        from ..model.params import State
        v = self._values
        initial = State.from_degrees(*v["trajectory.initial"])
        final = State.from_degrees(*v["trajectory.final"])
        if v["trajectory.pivot_at_equilibrium"]:
            zg = static_equilibrium(self.spring_model(), self.robot_params())
            initial = State(initial.theta1, initial.theta2, zg, *initial.vector[3:])
            final = State(final.theta1, final.theta2, zg, *final.vector[3:])
        return ReferenceSettings(initial=initial, final=final, horizon=v["trajectory.horizon"],
                                 mesh=v["trajectory.mesh"], u_bound=v["trajectory.u_bound"],
                                 pivot_weight=v["trajectory.pivot_weight"])

    def off_nominal_offset(self):
        """Deviation added to the nominal start for the off-nominal comparison, SI units."""
        th1, th2, zg, dth1, dth2, dzg = self["trajectory.off_nominal"]
        return (math.radians(th1), math.radians(th2), zg,
                math.radians(dth1), math.radians(dth2), dzg)

    def simulation_settings(self):
        from ..sim.closed_loop import SimulationSettings
        v = self._values
        return SimulationSettings(dt=v["simulation.dt"], saturate=v["simulation.saturate"])
