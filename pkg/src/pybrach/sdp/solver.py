"""
SDP Solver - Solve an ``SdpProblem`` through a cvxpy conic back end.

The solution certificate is re-derived from the returned primal and dual
values rather than taken on trust: equality and inequality residuals, block
eigenvalue floors, and the dual slack implied by stationarity.
"""

from dataclasses import dataclass, field
from enum import Enum
import logging
import math
from typing import Dict, Optional

import cvxpy as cp
import numpy as np
from scipy import sparse

from .problem import SQRT2, SdpProblem, smat, svec, svec_pairs, svec_size

logger = logging.getLogger(__name__)


class SdpStatus(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass(frozen=True)
class SdpSolution:
    """Outcome of one solve. Values are only meaningful when ``status`` is OPTIMAL."""

    status: SdpStatus
    objective: float = math.nan
    scalars: Dict[str, float] = field(default_factory=dict)
    blocks: Dict[str, np.ndarray] = field(default_factory=dict)
    x: Optional[np.ndarray] = None
    dual_objective: float = math.nan
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    gap: float = math.inf
    min_eigenvalue: float = math.nan
    iterations: int = 0
    solver: str = ""

    @property
    def ok(self) -> bool:
        return self.status is SdpStatus.OPTIMAL


def _vec_map(d: int) -> sparse.csr_matrix:
    """Matrix T with svec(X) = T @ vec(X), vec in column-major order."""
    rows, cols, vals = [], [], []
    for k, (i, j) in enumerate(svec_pairs(d)):
        rows.append(k)
        cols.append(i + j * d)
        vals.append(1.0 if i == j else SQRT2)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(svec_size(d), d * d))


def _solver_options(solver: str, tol: float, max_iters: int) -> dict:
    if solver == "CLARABEL":
        return {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol, "max_iter": max_iters}
    if solver == "SCS":
        return {"eps_abs": tol, "eps_rel": tol, "max_iters": max(max_iters, 10000)}
    return {}


def _certificate(problem: SdpProblem, x: np.ndarray, nu, lam):
    """Primal residual, dual residual, dual objective and eigenvalue floor."""
    scale_b = 1.0 + max(np.abs(problem.b_eq).max(initial=0.0), np.abs(problem.b_ineq).max(initial=0.0))
    eq_res = np.abs(problem.A_eq @ x - problem.b_eq).max(initial=0.0)
    ineq_res = np.maximum(problem.b_ineq - problem.A_ineq @ x, 0.0).max(initial=0.0)
    eigenvalues = [np.linalg.eigvalsh(smat(x[problem.block_slice(k)], d)).min()
                   for k, d in enumerate(problem.block_dims)]
    min_eig = min(eigenvalues, default=math.inf)
    primal_residual = max(eq_res, ineq_res) / scale_b

    nu = np.zeros(len(problem.b_eq)) if nu is None else np.asarray(nu, dtype=float).reshape(-1)
    lam = np.zeros(len(problem.b_ineq)) if lam is None else np.asarray(lam, dtype=float).reshape(-1)
    scale_c = 1.0 + np.abs(problem.c).max(initial=0.0)
    best = (math.inf, math.nan)
    # The multiplier sign on equalities is back-end specific; keep the consistent one.
    for sign in (1.0, -1.0):
        slack = problem.c + sign * (problem.A_eq.T @ nu) - problem.A_ineq.T @ lam
        residual = np.abs(slack[:problem.n_scalars]).max(initial=0.0)
        for k, d in enumerate(problem.block_dims):
            floor = np.linalg.eigvalsh(smat(slack[problem.block_slice(k)], d)).min()
            residual = max(residual, -floor)
        residual /= scale_c
        if residual < best[0]:
            best = (residual, problem.offset - sign * problem.b_eq @ nu + problem.b_ineq @ lam)
    return primal_residual, best[0], float(best[1]), float(min_eig)


def solve(problem: SdpProblem, tol: float = 1e-7, max_iters: int = 200,
          solver: str = "CLARABEL", retry: bool = True) -> SdpSolution:
    """
    Solve a semidefinite program.

    Args:
        problem: The program (a minimization)
        tol: Feasibility and relative gap tolerance
        max_iters: Interior-point iteration cap
        solver: cvxpy solver name, ``CLARABEL`` or ``SCS``
        retry: Re-solve once with row-normalised constraints on numerical trouble

    Returns:
        SdpSolution; callers must check ``status`` (no exception for infeasibility)
    """
    s = cp.Variable(problem.n_scalars) if problem.n_scalars else None
    blocks = [cp.Variable((d, d), PSD=True) for d in problem.block_dims]
    maps = [_vec_map(d) for d in problem.block_dims]

    def linear(A: sparse.csr_matrix):
        A = sparse.csc_matrix(A)
        parts = []
        if s is not None:
            parts.append(A[:, :problem.n_scalars] @ s)
        for k, (X, T) in enumerate(zip(blocks, maps)):
            parts.append((A[:, problem.block_slice(k)] @ T) @ cp.vec(X, order="F"))
        return sum(parts[1:], parts[0])

    constraints = []
    eq = ineq = None
    if problem.A_eq.shape[0]:
        eq = linear(problem.A_eq) == problem.b_eq
        constraints.append(eq)
    if problem.A_ineq.shape[0]:
        ineq = linear(problem.A_ineq) >= problem.b_ineq
        constraints.append(ineq)
    objective = linear(sparse.csr_matrix(problem.c.reshape(1, -1)))
    prob = cp.Problem(cp.Minimize(cp.sum(objective) + problem.offset), constraints)

    try:
        prob.solve(solver=solver, **_solver_options(solver, tol, max_iters))
    except cp.error.SolverError as exc:
        logger.warning("SDP back end failed: %s", exc)
        return _retry_or(problem, tol, max_iters, solver, retry, SdpSolution(SdpStatus.NUMERICAL_TROUBLE, solver=solver))

    iterations = int(getattr(prob.solver_stats, "num_iters", 0) or 0)
    status = prob.status
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SdpSolution(SdpStatus.INFEASIBLE, iterations=iterations, solver=solver)
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return SdpSolution(SdpStatus.UNBOUNDED, iterations=iterations, solver=solver)
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return _retry_or(problem, tol, max_iters, solver, retry,
                         SdpSolution(SdpStatus.NUMERICAL_TROUBLE, iterations=iterations, solver=solver))

    x = np.zeros(problem.n_variables)
    if s is not None:
        x[:problem.n_scalars] = s.value
    for k, X in enumerate(blocks):
        value = np.asarray(X.value, dtype=float)
        x[problem.block_slice(k)] = svec(0.5 * (value + value.T))
    primal_res, dual_res, dual_obj, min_eig = _certificate(
        problem, x, eq.dual_value if eq is not None else None,
        ineq.dual_value if ineq is not None else None)
    primal_obj = float(problem.c @ x + problem.offset)
    gap = abs(primal_obj - dual_obj) / (1.0 + abs(primal_obj) + abs(dual_obj))

    if status == cp.OPTIMAL_INACCURATE and primal_res > 10.0 * math.sqrt(tol):
        logger.debug("inaccurate SDP solution rejected: primal residual %.3g", primal_res)
        return _retry_or(problem, tol, max_iters, solver, retry,
                         SdpSolution(SdpStatus.NUMERICAL_TROUBLE, iterations=iterations, solver=solver))

    scalars, matrices = problem.split(x)
    return SdpSolution(SdpStatus.OPTIMAL, primal_obj, scalars, matrices, x, dual_obj,
                       primal_res, dual_res, gap, min_eig, iterations, solver)


def _retry_or(problem, tol, max_iters, solver, retry, failure: SdpSolution) -> SdpSolution:
    if not retry:
        return failure
    logger.info("retrying SDP with normalized constraint rows")
    return solve(problem.normalized(), tol, max_iters, solver, retry=False)
