"""
Model Parameters - Physical description of the robot and the cable.

Defaults reproduce the two-link prototype and the 8 m cable; the spring-damper
values are the identified equivalent of that cable.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from ..core.errors import ConfigError


STATE_NAMES = ("theta1", "theta2", "zg", "dtheta1", "dtheta2", "dzg")
OUTPUT_INDICES = (0, 1, 3, 4)
GRAVITY = 9.81


@dataclass(frozen=True)
class RobotParams:
    """Masses (kg), lengths (m) and inertias (kg m^2) of the two-link robot."""

    m0: float = 1.247
    m1: float = 0.794
    m2: float = 0.794
    l1: float = 0.35
    l2: float = 0.35
    d1: float = 0.15
    d2: float = 0.2
    I1: float = 0.0088
    I2: float = 0.0088
    g: float = GRAVITY

    def __post_init__(self):
        for name in ("m0", "m1", "m2", "l1", "l2", "d1", "d2", "I1", "I2"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"robot parameter {name} must be positive")
        if self.d1 > self.l1 or self.d2 > self.l2:
            raise ConfigError("center-of-mass offsets must not exceed link lengths")
        if self.g < 0:
            raise ConfigError("gravity must be non-negative")

    @property
    def total_mass(self) -> float:
        return self.m0 + self.m1 + self.m2


@dataclass(frozen=True)
class CableSpringModel:
    """Three parallel spring-dampers holding the pivot gripper."""

    k0: tuple = (76.74, 180.50, 279.14)
    b: tuple = (4.25, 4.72, 4.88)
    zc: tuple = (2.00, 2.04, 2.06)

    def __post_init__(self):
        for name in ("k0", "b", "zc"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != 3:
                raise ConfigError(f"cable model needs three values for {name}")
            object.__setattr__(self, name, values)
        if min(self.k0) <= 0 or min(self.zc) <= 0 or min(self.b) < 0:
            raise ConfigError("cable stiffness and heights must be positive, damping non-negative")

    def stiffness(self, w: float = 0.0) -> np.ndarray:
        """Effective stiffnesses ``(1 + w) * k0``."""
        return (1.0 + w) * np.asarray(self.k0)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.k0, self.b, self.zc])

    @classmethod
    def from_vector(cls, v) -> "CableSpringModel":
        v = np.asarray(v, dtype=float)
        return cls(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]))

    def equivalent(self) -> tuple[float, float, float]:
        """Single-spring equivalent: total stiffness, total damping, weighted height."""
        k = np.asarray(self.k0)
        return float(k.sum()), float(sum(self.b)), float(k @ np.asarray(self.zc) / k.sum())

    def to_text(self) -> str:
        lines = [f"{name}_{i + 1}={value!r}"
                 for name in ("k0", "b", "zc")
                 for i, value in enumerate(getattr(self, name))]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CableSpringModel":
        values = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = float(value)
        try:
            return cls(*(tuple(values[f"{name}_{i}"] for i in (1, 2, 3))
                         for name in ("k0", "b", "zc")))
        except KeyError as exc:
            raise ConfigError(f"cable model file lacks {exc.args[0]}") from None


@dataclass(frozen=True)
class UncertaintyBox:
    """Bounds on the fractional stiffness uncertainty w."""

    w_lb: float = -0.2
    w_ub: float = 0.2

    def __post_init__(self):
        if self.w_lb > self.w_ub:
            raise ConfigError("uncertainty lower bound exceeds upper bound")

    def contains(self, w: float) -> bool:
        return self.w_lb <= w <= self.w_ub

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.w_lb, self.w_ub, size=size)


@dataclass(frozen=True)
class FullCableModel:
    """
    Lumped-mass cable pinned at both ends.

    Nodes sit at fixed horizontal stations and move vertically. Adjacent nodes
    are joined by axial spring-dampers of stiffness ``kc * (n_nodes - 1)``; the
    cable is pre-stretched by ``prestretch`` metres so its tension is
    ``kc * prestretch``. The pivot gripper couples to ``attach_index`` through
    a stiff junction.
    """

    lc: float = 8.0
    mc: float = 0.25
    kc: float = 785400.0
    bc: float = 4.0
    n_nodes: int = 17
    attach_index: int = 8
    junction_k: float = 1.0e5
    junction_b: float = 50.0
    prestretch: float = 1.8e-3
    anchor_height: float = 2.0
    attached: bool = True

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ConfigError("full cable needs at least three nodes")
        if not 0 < self.attach_index < self.n_nodes - 1:
            raise ConfigError("attach_index must be an interior node")
        for name in ("lc", "mc", "kc", "bc", "junction_k", "junction_b", "prestretch"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"full-cable parameter {name} must be positive")

    @property
    def spacing(self) -> float:
        return self.lc / (self.n_nodes - 1)

    @property
    def node_mass(self) -> float:
        return self.mc * self.lc / (self.n_nodes - 1)

    @property
    def segment_stiffness(self) -> float:
        return self.kc * (self.n_nodes - 1)

    @property
    def tension(self) -> float:
        return self.kc * self.prestretch

    def fundamental_frequency(self) -> float:
        """Taut-string estimate of the first transverse mode, Hz."""
        return math.sqrt(self.tension / self.mc) / (2.0 * self.lc)

    def scaled(self, stiffness_scale: float) -> "FullCableModel":
        """Copy with ``kc`` (and therefore the tension) multiplied by ``stiffness_scale``."""
        return replace(self, kc=self.kc * stiffness_scale)


@dataclass(frozen=True)
class State:
    """Robot state: joint angles (rad), gripper height (m) and their rates."""

    theta1: float
    theta2: float
    zg: float
    dtheta1: float = 0.0
    dtheta2: float = 0.0
    dzg: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise ConfigError("state components must be finite")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.zg,
                         self.dtheta1, self.dtheta2, self.dzg], dtype=float)

    def __array__(self, dtype=None, copy=None):
        return self.vector if dtype is None else self.vector.astype(dtype)

    @classmethod
    def from_vector(cls, x) -> "State":
        x = np.asarray(x, dtype=float)
        return cls(*(float(v) for v in x[:6]))

    @classmethod
    def from_degrees(cls, theta1, theta2, zg, dtheta1=0.0, dtheta2=0.0, dzg=0.0) -> "State":
        """Build a state from angles in degrees and rates in deg/s."""
        return cls(math.radians(theta1), math.radians(theta2), zg,
                   math.radians(dtheta1), math.radians(dtheta2), dzg)
