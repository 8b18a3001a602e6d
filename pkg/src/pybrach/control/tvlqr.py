"""
TVLQR - Time-varying LQR along a reference trajectory.

The dynamics are linearized at sampled reference points and the differential
Riccati equation

    -dS/dt = A^T S + S A - S B R^-1 B^T S + Q,    S(tf) = Qf

is integrated backward with RK4, A and B interpolated linearly between samples.
"""

from dataclasses import dataclass
import logging
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..core.errors import ConfigError, MissingInputError, NumericalFailure
from ..model.trajectory import Trajectory

logger = logging.getLogger(__name__)

BLOWUP = 1e12


@dataclass(frozen=True)
class LqrWeights:
    """State, terminal and input cost matrices."""

    Q: np.ndarray
    Qf: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        Qf = np.atleast_2d(np.asarray(self.Qf, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name, M in (("Q", Q), ("Qf", Qf)):
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() < -1e-12:
                raise ConfigError(f"LQR weight {name} must be symmetric PSD")
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise ConfigError("LQR weight R must be symmetric positive definite")
        if Q.shape != Qf.shape:
            raise ConfigError("Q and Qf differ in shape")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "Qf", Qf)
        object.__setattr__(self, "R", R)

    @classmethod
    def diagonal(cls, q: Sequence[float], qf: Sequence[float], r: float) -> "LqrWeights":
        return cls(np.diag(q), np.diag(qf), np.array([[r]]))


@dataclass(frozen=True)
class LinearizedSystem:
    times: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def at(self, t: float):
        """A and B linearly interpolated at time t."""
        i = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2))
        s = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return ((1 - s) * self.A[i] + s * self.A[i + 1],
                (1 - s) * self.B[i] + s * self.B[i + 1])


@dataclass(frozen=True)
class RiccatiSolution:
    times: np.ndarray
    S: np.ndarray
    K: np.ndarray

    def gain_at(self, t: float) -> np.ndarray:
        """Gain K(t), linearly interpolated."""
        return _interp_matrix(self.times, self.K, t)


def _interp_matrix(times, stack, t: float) -> np.ndarray:
    i = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
    s = float(np.clip((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0))
    return (1 - s) * stack[i] + s * stack[i + 1]


def _jacobians(f, x, u, step):
    n = x.size
    A = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        A[:, k] = (f(x + e, u) - f(x - e, u)) / (2.0 * step)
    B = ((f(x, u + step) - f(x, u - step)) / (2.0 * step)).reshape(n, 1)
    return A, B


def linearize(dynamics: Callable[[np.ndarray, float], np.ndarray], traj: Trajectory,
              times: Sequence[float], step: float = 1e-6, check_step: float = 1e-5) -> LinearizedSystem:
    """
    Jacobians of the dynamics at reference samples by central differences.

    Each Jacobian is recomputed with ``check_step``; a disagreement beyond
    1e-4 relative is logged.

    Raises:
        NumericalFailure: If a Jacobian has non-finite entries
    """
    times = np.asarray(times, dtype=float)
    As, Bs = [], []
    for t in times:
        x, u = traj.state_at(t), traj.input_at(t)
        A, B = _jacobians(dynamics, x, u, step)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise NumericalFailure(f"non-finite Jacobian at t = {t:.6g}")
        A2, B2 = _jacobians(dynamics, x, u, check_step)
        scale = 1.0 + max(np.abs(A).max(), np.abs(B).max())
        mismatch = max(np.abs(A - A2).max(), np.abs(B - B2).max()) / scale
        if mismatch > 1e-4:
            logger.warning("Jacobian step sensitivity %.2e at t = %.4f", mismatch, t)
        As.append(A)
        Bs.append(B)
    return LinearizedSystem(times, np.array(As), np.array(Bs))


def riccati_backward(ls: LinearizedSystem, wts: LqrWeights, substeps: int = 10) -> RiccatiSolution:
    """
    Integrate the Riccati equation from S(tf) = Qf back to the first sample.

    Raises:
        NumericalFailure: If S blows up, naming the time reached
    """
    R_inv = np.linalg.inv(wts.R)
    Q = wts.Q

    def rhs(t, S):
        A, B = ls.at(t)
        return -(A.T @ S + S @ A - S @ B @ R_inv @ B.T @ S + Q)

    times = ls.times
    S = np.empty((len(times),) + Q.shape)
    S[-1] = wts.Qf
    current = wts.Qf.copy()
    for i in range(len(times) - 1, 0, -1):
        h = (times[i - 1] - times[i]) / substeps
        t = times[i]
        for _ in range(substeps):
            k1 = rhs(t, current)
            k2 = rhs(t + h / 2, current + h / 2 * k1)
            k3 = rhs(t + h / 2, current + h / 2 * k2)
            k4 = rhs(t + h, current + h * k3)
            current = current + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            current = 0.5 * (current + current.T)
            t += h
            if not np.all(np.isfinite(current)) or np.abs(current).max() > BLOWUP:
                raise NumericalFailure(f"Riccati solution blew up at t = {t:.6g}")
        S[i - 1] = current
    K = np.array([R_inv @ B.T @ Si for B, Si in zip(ls.B, S)])
    return RiccatiSolution(times.copy(), S, K)


class TimeVaryingQuadratic:
    """x^T S(t) x with S interpolated linearly between samples."""

    def __init__(self, times, S):
        self.times = np.asarray(times, dtype=float)
        self.S = np.asarray(S, dtype=float)

    def shape_at(self, t: float) -> np.ndarray:
        return _interp_matrix(self.times, self.S, t)

    def __call__(self, xbar, t: float) -> float:
        xbar = np.asarray(xbar, dtype=float)
        return float(xbar @ self.shape_at(t) @ xbar)


def v0_quadratic(rs: RiccatiSolution) -> TimeVaryingQuadratic:
    return TimeVaryingQuadratic(rs.times, rs.S)


def projected_gains(rs: RiccatiSolution, output_indices: Sequence[int]) -> np.ndarray:
    """Output-feedback coefficients [offset, gains on outputs] of u = -K x with unmeasured gains dropped."""
    K = rs.K[:, 0, :]
    return np.column_stack([np.zeros(len(K)), -K[:, list(output_indices)]])


def save_riccati(rs: RiccatiSolution, path) -> None:
    """Per-sample blocks: ``t <time>``, the rows of S, then the row of K."""
    lines = [f"# riccati samples {len(rs.times)} states {rs.S.shape[1]}"]
    for t, S, K in zip(rs.times, rs.S, rs.K):
        lines.append(f"t {t!r}")
        lines += [" ".join(repr(float(v)) for v in row) for row in S]
        lines += ["K " + " ".join(repr(float(v)) for v in row) for row in K]
    Path(path).write_text("\n".join(lines) + "\n")


def load_riccati(path) -> RiccatiSolution:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"Riccati file not found: {path}")
    times, S, K = [], [], []
    for line in path.read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split()
        if fields[0] == "t":
            times.append(float(fields[1]))
            S.append([])
            K.append([])
        elif fields[0] == "K":
            K[-1].append([float(v) for v in fields[1:]])
        else:
            S[-1].append([float(v) for v in fields])
    return RiccatiSolution(np.array(times), np.array(S), np.array(K))
