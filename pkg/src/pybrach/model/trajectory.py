"""
Trajectory - Time-sampled states and inputs.

Inputs follow the zero-order-hold convention: ``inputs[i]`` is applied over
``[times[i], times[i+1])``. A trajectory may carry one input per sample or one
fewer; in the latter case the last input is held to the final time.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..core.errors import ConfigError, HorizonError, MissingInputError
from .params import STATE_NAMES


@dataclass(frozen=True)
class Trajectory:
    """Sampled state and input history."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.asarray(self.inputs, dtype=float).reshape(-1)
        if times.ndim != 1 or len(times) < 2:
            raise ConfigError("trajectory needs at least two samples")
        if np.any(np.diff(times) <= 0):
            raise ConfigError("trajectory times must be strictly increasing")
        if states.shape[0] != len(times):
            raise ConfigError("one state per sample required")
        if len(inputs) not in (len(times), len(times) - 1):
            raise ConfigError("inputs must have one entry per sample or one fewer")
        if len(inputs) == len(times) - 1:
            inputs = np.append(inputs, inputs[-1])
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def tf(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0].copy()

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1].copy()

    def __len__(self) -> int:
        return len(self.times)

    def _check(self, t: float) -> None:
        tol = 1e-9 * max(1.0, abs(self.tf))
        if t < self.t0 - tol or t > self.tf + tol:
            raise HorizonError(f"t = {t} outside [{self.t0}, {self.tf}]")

    def state_at(self, t: float) -> np.ndarray:
        """Linearly interpolated state at time t."""
        self._check(t)
        return np.array([np.interp(t, self.times, column) for column in self.states.T])

    def input_at(self, t: float) -> float:
        """Zero-order-hold input at time t."""
        self._check(t)
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.inputs[min(max(i, 0), len(self.inputs) - 1)])

    def resample(self, times: Sequence[float]) -> "Trajectory":
        """Trajectory interpolated onto new sample times (inputs held)."""
        times = np.asarray(times, dtype=float)
        return Trajectory(times,
                          np.array([self.state_at(t) for t in times]),
                          np.array([self.input_at(t) for t in times]))

    def robot_states(self) -> np.ndarray:
        """The six robot coordinates of every sample (drops cable node columns)."""
        return self.states[:, :6]

    def to_text(self, names: Optional[Sequence[str]] = None) -> str:
        if names is None:
            names = STATE_NAMES if self.states.shape[1] == 6 else [
                f"x{i}" for i in range(self.states.shape[1])]
        lines = ["# t " + " ".join(names) + " u"]
        for t, x, u in zip(self.times, self.states, self.inputs):
            lines.append(" ".join(repr(float(v)) for v in (t, *x, u)))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        """Write whitespace-separated records ``t <states...> u`` with a ``#`` header."""
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Trajectory":
        rows = [line.split() for line in text.splitlines()
                if line.strip() and not line.lstrip().startswith("#")]
        if not rows:
            raise ConfigError("trajectory text holds no records")
        data = np.array(rows, dtype=float)
        return cls(data[:, 0], data[:, 1:-1], data[:, -1])

    @classmethod
    def load(cls, path) -> "Trajectory":
        path = Path(path)
        if not path.exists():
            raise MissingInputError(f"trajectory file not found: {path}")
        return cls.from_text(path.read_text())
