"""
SDP Problem - Linear objective over scalars and PSD blocks with affine constraints.

Decision vector layout: the scalar variables first, then every block in scaled
vectorized form. ``svec`` lists the upper triangle row by row and multiplies
off-diagonal entries by sqrt(2), so <X, Y> = svec(X) . svec(Y).

The problem is always a minimization:

    minimize    c . x
    subject to  A_eq x = b_eq,  A_ineq x >= b_ineq,  every block PSD
"""

from dataclasses import dataclass
import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from ..core.errors import ConfigError

SQRT2 = math.sqrt(2.0)

Key = Union[str, Tuple[str, int, int]]


def svec_size(d: int) -> int:
    return d * (d + 1) // 2


def svec_pairs(d: int) -> List[Tuple[int, int]]:
    """(i, j) index pairs in svec order: upper triangle, row by row."""
    return [(i, j) for i in range(d) for j in range(i, d)]


def svec_index(d: int) -> Dict[Tuple[int, int], int]:
    return {pair: k for k, pair in enumerate(svec_pairs(d))}


def svec(matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    return np.array([matrix[i, j] * (1.0 if i == j else SQRT2)
                     for i, j in svec_pairs(matrix.shape[0])])


def smat(vector, d: int) -> np.ndarray:
    matrix = np.zeros((d, d))
    for value, (i, j) in zip(vector, svec_pairs(d)):
        if i == j:
            matrix[i, i] = value
        else:
            matrix[i, j] = matrix[j, i] = value / SQRT2
    return matrix


@dataclass
class SdpProblem:
    """Solver-agnostic semidefinite program."""

    scalar_names: Tuple[str, ...]
    block_names: Tuple[str, ...]
    block_dims: Tuple[int, ...]
    c: np.ndarray
    A_eq: sparse.csr_matrix
    b_eq: np.ndarray
    A_ineq: sparse.csr_matrix
    b_ineq: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        if len(self.block_names) != len(self.block_dims):
            raise ConfigError("one dimension per PSD block required")
        if any(d < 1 for d in self.block_dims):
            raise ConfigError("PSD block dimensions must be at least 1")
        if len(set(self.scalar_names) | set(self.block_names)) != len(self.scalar_names) + len(self.block_names):
            raise ConfigError("variable name collision in SDP problem")
        n = self.n_variables
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.A_eq = sparse.csr_matrix(self.A_eq) if self.A_eq is not None else sparse.csr_matrix((0, n))
        self.A_ineq = sparse.csr_matrix(self.A_ineq) if self.A_ineq is not None else sparse.csr_matrix((0, n))
        self._scalar_index = {name: k for k, name in enumerate(self.scalar_names)}
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        self.b_ineq = np.asarray(self.b_ineq, dtype=float).reshape(-1)
        if self.c.size != n or self.A_eq.shape[1] != n or self.A_ineq.shape[1] != n:
            raise ConfigError("constraint columns do not match the declared variables")

    @property
    def n_scalars(self) -> int:
        return len(self.scalar_names)

    @property
    def n_variables(self) -> int:
        return self.n_scalars + sum(svec_size(d) for d in self.block_dims)

    @property
    def block_offsets(self) -> List[int]:
        offsets, position = [], self.n_scalars
        for d in self.block_dims:
            offsets.append(position)
            position += svec_size(d)
        return offsets

    def block_slice(self, k: int) -> slice:
        start = self.block_offsets[k]
        return slice(start, start + svec_size(self.block_dims[k]))

    def column(self, key: Key) -> Tuple[int, float]:
        """Column index and scale for a scalar name or a block entry (name, i, j)."""
        if isinstance(key, str):
            if key not in self._scalar_index:
                raise ConfigError(f"undeclared SDP variable {key}")
            return self._scalar_index[key], 1.0
        name, i, j = key
        try:
            k = self.block_names.index(name)
        except ValueError:
            raise ConfigError(f"undeclared PSD block {name}") from None
        i, j = min(i, j), max(i, j)
        d = self.block_dims[k]
        if j >= d:
            raise ConfigError(f"entry ({i}, {j}) outside block {name} of size {d}")
        return self.block_offsets[k] + svec_index(d)[(i, j)], (1.0 if i == j else 1.0 / SQRT2)

    def split(self, x) -> Tuple[Dict[str, float], Dict[str, np.ndarray]]:
        """Decision vector to named scalars and full block matrices."""
        x = np.asarray(x, dtype=float)
        scalars = {name: float(x[k]) for k, name in enumerate(self.scalar_names)}
        blocks = {name: smat(x[self.block_slice(k)], d)
                  for k, (name, d) in enumerate(zip(self.block_names, self.block_dims))}
        return scalars, blocks

    def normalized(self) -> "SdpProblem":
        """Copy with every constraint row scaled to unit Euclidean norm."""

        def scale(A, b):
            norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).reshape(-1))
            norms[norms == 0] = 1.0
            D = sparse.diags(1.0 / norms)
            return sparse.csr_matrix(D @ A), b / norms

        A_eq, b_eq = scale(self.A_eq, self.b_eq)
        A_ineq, b_ineq = scale(self.A_ineq, self.b_ineq)
        return SdpProblem(self.scalar_names, self.block_names, self.block_dims, self.c.copy(),
                          A_eq, b_eq, A_ineq, b_ineq, self.offset)


class _RowBuilder:
    def __init__(self):
        self.rows: List[int] = []
        self.cols: List[int] = []
        self.vals: List[float] = []
        self.rhs: List[float] = []

    def add(self, entries: Mapping[int, float], rhs: float) -> None:
        row = len(self.rhs)
        for col, value in entries.items():
            if value != 0.0:
                self.rows.append(row)
                self.cols.append(col)
                self.vals.append(value)
        self.rhs.append(float(rhs))

    def matrix(self, n: int) -> Tuple[sparse.csr_matrix, np.ndarray]:
        A = sparse.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.rhs), n))
        A.sum_duplicates()
        return A, np.array(self.rhs, dtype=float)


def _columns(problem: SdpProblem, coefficients: Mapping[Key, float]) -> Dict[int, float]:
    entries: Dict[int, float] = {}
    for key, value in coefficients.items():
        col, factor = problem.column(key)
        entries[col] = entries.get(col, 0.0) + factor * float(value)
    return entries


def make_problem(scalars: Sequence[str], blocks: Mapping[str, int],
                 objective: Mapping[Key, float],
                 equalities: Sequence[Tuple[Mapping[Key, float], float]] = (),
                 inequalities: Sequence[Tuple[Mapping[Key, float], float]] = (),
                 offset: float = 0.0) -> SdpProblem:
    """
    Build a problem from named coefficients.

    Keys are scalar names or ``(block, i, j)`` matrix entries; a coefficient on an
    off-diagonal entry multiplies X[i, j] itself. Inequalities read ``row . x >= rhs``.
    """
    names = tuple(blocks)
    problem = SdpProblem(tuple(scalars), names, tuple(blocks[n] for n in names),
                         np.zeros(len(scalars) + sum(svec_size(blocks[n]) for n in names)),
                         None, np.zeros(0), None, np.zeros(0), offset)
    for col, value in _columns(problem, objective).items():
        problem.c[col] += value
    eq, ineq = _RowBuilder(), _RowBuilder()
    for coefficients, rhs in equalities:
        eq.add(_columns(problem, coefficients), rhs)
    for coefficients, rhs in inequalities:
        ineq.add(_columns(problem, coefficients), rhs)
    problem.A_eq, problem.b_eq = eq.matrix(problem.n_variables)
    problem.A_ineq, problem.b_ineq = ineq.matrix(problem.n_variables)
    return problem


def assemble(sos_blocks: Sequence, extra_scalars: Sequence[str] = (),
             objective: Optional[Mapping[Key, float]] = None,
             equalities: Sequence[Tuple[Mapping[Key, float], float]] = (),
             inequalities: Sequence[Tuple[Mapping[Key, float], float]] = (),
             offset: float = 0.0) -> SdpProblem:
    """
    Bridge SOS constraints to one SDP.

    Each SOS constraint contributes one PSD Gram block named after it; free
    polynomial coefficients with the same name in several constraints become one
    shared scalar variable.

    Args:
        sos_blocks: ``SosConstraintBlocks`` from ``poly.sos.sos_blocks``
        extra_scalars: Further scalar variables (levels, slacks)
        objective: Coefficients to minimize, keyed like ``make_problem``
        equalities: Extra affine equalities
        inequalities: Extra affine inequalities (``>=``)

    Raises:
        ConfigError: On block-name collisions
    """
    block_dims: Dict[str, int] = {}
    scalars: Dict[str, None] = {}
    for block in sos_blocks:
        if block.name in block_dims:
            raise ConfigError(f"duplicate SOS constraint name {block.name}")
        block_dims[block.name] = block.gram_dimension
        for name in block.free_names:
            scalars[name] = None
    for name in extra_scalars:
        scalars[name] = None
    if set(scalars) & set(block_dims):
        raise ConfigError(f"names used as both scalar and block: {sorted(set(scalars) & set(block_dims))}")

    problem = make_problem(tuple(scalars), block_dims, objective or {}, equalities,
                           inequalities, offset)
    scalar_index = {name: k for k, name in enumerate(problem.scalar_names)}
    eq = _RowBuilder()
    for k, block in enumerate(sos_blocks):
        start = problem.block_offsets[k]
        gram = block.gram_rows.tocsr()
        for row in range(gram.shape[0]):
            entries: Dict[int, float] = {}
            lo, hi = gram.indptr[row], gram.indptr[row + 1]
            for col, value in zip(gram.indices[lo:hi], gram.data[lo:hi]):
                entries[start + int(col)] = float(value)
            for name, value in block.free_rows[row].items():
                col = scalar_index[name]
                entries[col] = entries.get(col, 0.0) + value
            eq.add(entries, block.rhs[row])
    A_sos, b_sos = eq.matrix(problem.n_variables)
    problem.A_eq = sparse.vstack([A_sos, problem.A_eq]).tocsr()
    problem.b_eq = np.concatenate([b_sos, problem.b_eq])
    return problem


def dump_problem(problem: SdpProblem, path) -> None:
    """
    Write a sparse text dump for cross-checking with other solvers.

    Sections ``objective``, ``eq`` and ``ineq`` list ``constraint-id variable-id value``
    per nonzero (constraint-id is 0 for the objective), then the right-hand sides.
    """
    lines = [f"# scalars {problem.n_scalars}",
             "# blocks " + " ".join(str(d) for d in problem.block_dims),
             "objective"]
    lines += [f"0 {k} {v!r}" for k, v in enumerate(problem.c) if v != 0.0]
    for label, A, b in (("eq", problem.A_eq, problem.b_eq), ("ineq", problem.A_ineq, problem.b_ineq)):
        lines.append(label)
        coo = A.tocoo()
        lines += [f"{r} {c} {v!r}" for r, c, v in zip(coo.row, coo.col, coo.data)]
        lines.append(f"rhs {label}")
        lines += [f"{r} {v!r}" for r, v in enumerate(b)]
    Path(path).write_text("\n".join(lines) + "\n")
