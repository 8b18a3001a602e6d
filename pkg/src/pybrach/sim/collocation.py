"""
Collocation - Reference swing by trapezoidal direct collocation.

States at the mesh nodes and one held torque per mesh interval are the
decision variables. Trapezoidal defects tie consecutive nodes together, the
initial state is fixed, and the terminal joint angles and rates are fixed. The
pivot (zg, dzg) is free at the end and pulled towards the target by a
quadratic penalty. The objective is the torque effort sum(h * u^2).
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy import optimize

from ..core.errors import ConfigError, NumericalFailure
from ..model.brachiator import dynamics_spring
from ..model.params import CableSpringModel, RobotParams, State
from ..model.trajectory import Trajectory

logger = logging.getLogger(__name__)

JOINT_INDICES = (0, 1, 3, 4)
PIVOT_INDICES = (2, 5)
DEFECT_TOLERANCE = 1e-6
FD_STEP = 1e-6


@dataclass(frozen=True)
class ReferenceSettings:
    """Boundary states, horizon (s), mesh intervals, torque bound (N m) and pivot penalty weight."""

    initial: State
    final: State
    horizon: float = 0.7
    mesh: int = 35
    u_bound: float = 5.0
    pivot_weight: float = 100.0

    def __post_init__(self):
        if self.horizon <= 0 or self.mesh < 2:
            raise ConfigError("reference needs a positive horizon and at least two mesh intervals")
        if self.u_bound <= 0 or self.pivot_weight < 0:
            raise ConfigError("torque bound must be positive and pivot weight non-negative")


class _Transcription:
    """Packing of nodes and inputs into one decision vector, plus the constraint functions."""

    def __init__(self, f, settings: ReferenceSettings, n: int = 6):
        self.f = f
        self.settings = settings
        self.n = n
        self.mesh = settings.mesh
        self.h = settings.horizon / settings.mesh
        self.x0 = settings.initial.vector
        self.xf = settings.final.vector

    @property
    def size(self) -> int:
        return self.n * (self.mesh + 1) + self.mesh

    def unpack(self, z):
        X = z[:self.n * (self.mesh + 1)].reshape(self.mesh + 1, self.n)
        return X, z[self.n * (self.mesh + 1):]

    def pack(self, X, U) -> np.ndarray:
        return np.concatenate([np.asarray(X).reshape(-1), np.asarray(U)])

    def _defect(self, xk, xk1, uk) -> np.ndarray:
        return xk1 - xk - 0.5 * self.h * (self.f(xk, uk) + self.f(xk1, uk))

    def objective(self, z) -> float:
        X, U = self.unpack(z)
        pivot = X[-1, list(PIVOT_INDICES)] - self.xf[list(PIVOT_INDICES)]
        return float(self.h * U @ U + self.settings.pivot_weight * pivot @ pivot)

    def objective_gradient(self, z) -> np.ndarray:
        X, U = self.unpack(z)
        gX = np.zeros_like(X)
        idx = list(PIVOT_INDICES)
        gX[-1, idx] = 2.0 * self.settings.pivot_weight * (X[-1, idx] - self.xf[idx])
        return self.pack(gX, 2.0 * self.h * U)

    def equalities(self, z) -> np.ndarray:
        X, U = self.unpack(z)
        defects = [self._defect(X[k], X[k + 1], U[k]) for k in range(self.mesh)]
        return np.concatenate(defects + [X[0] - self.x0, X[-1, list(JOINT_INDICES)] - self.xf[list(JOINT_INDICES)]])

    def equality_jacobian(self, z) -> np.ndarray:
        """Block-sparse Jacobian; each defect only sees its two nodes and its input."""
        X, U = self.unpack(z)
        n, N = self.n, self.mesh
        rows = n * N + n + len(JOINT_INDICES)
        J = np.zeros((rows, self.size))
        u_col = n * (N + 1)
        for k in range(N):
            r = slice(n * k, n * (k + 1))
            for j in range(n):
                e = np.zeros(n)
                e[j] = FD_STEP
                J[r, n * k + j] = (self._defect(X[k] + e, X[k + 1], U[k])
                                   - self._defect(X[k] - e, X[k + 1], U[k])) / (2 * FD_STEP)
                J[r, n * (k + 1) + j] = (self._defect(X[k], X[k + 1] + e, U[k])
                                         - self._defect(X[k], X[k + 1] - e, U[k])) / (2 * FD_STEP)
            J[r, u_col + k] = (self._defect(X[k], X[k + 1], U[k] + FD_STEP)
                               - self._defect(X[k], X[k + 1], U[k] - FD_STEP)) / (2 * FD_STEP)
        row = n * N
        J[row:row + n, :n] = np.eye(n)
        for m, j in enumerate(JOINT_INDICES):
            J[row + n + m, n * N + j] = 1.0
        return J

    def initial_guess(self) -> np.ndarray:
        s = np.linspace(0.0, 1.0, self.mesh + 1)[:, None]
        return self.pack((1 - s) * self.x0 + s * self.xf, np.zeros(self.mesh))


def generate_reference(settings: ReferenceSettings, rp: RobotParams, cm: CableSpringModel,
                       max_iterations: int = 500) -> Trajectory:
    """
    Minimum-effort swing on the nominal spring model.

    Returns:
        Trajectory on the uniform mesh with one held torque per interval

    Raises:
        NumericalFailure: If the NLP does not converge to a dynamically
            consistent solution; the message carries the defect norm
    """
    def f(x, u):
        return dynamics_spring(x, u, 0.0, rp, cm)

    tx = _Transcription(f, settings)
    bound = settings.u_bound
    bounds = [(None, None)] * (tx.n * (tx.mesh + 1)) + [(-bound, bound)] * tx.mesh
    result = optimize.minimize(
        tx.objective, tx.initial_guess(), jac=tx.objective_gradient, method="SLSQP", bounds=bounds,
        constraints=[{"type": "eq", "fun": tx.equalities, "jac": tx.equality_jacobian}],
        options={"maxiter": max_iterations, "ftol": 1e-10})
    defect = float(np.abs(tx.equalities(result.x)).max())
    logger.info("collocation: %s after %d iterations, effort %.4g, max defect %.2e",
                result.message, result.nit, result.fun, defect)
    if not result.success or defect > DEFECT_TOLERANCE:
        raise NumericalFailure(f"trajectory optimization failed ({result.message}); defect norm {defect:.3e}")
    X, U = tx.unpack(result.x)
    times = np.linspace(0.0, settings.horizon, settings.mesh + 1)
    return Trajectory(times, X, np.clip(U, -bound, bound))
