"""
SOS - Gram-matrix encoding of sum-of-squares constraints.

p is SOS over a monomial basis z when p = z^T Q z for some Q PSD. Matching the
coefficient of every monomial of z z^T and of p gives linear equality rows in
svec(Q) and in the decision variables p depends on.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

import numpy as np
from scipy import sparse

from ..core.errors import ConfigError
from ..sdp.problem import SQRT2, smat, svec_pairs, svec_size
from .expr import PolyExpr
from .polynomial import MonomialBasis, Poly, grlex_key


@dataclass(frozen=True)
class SosConstraintBlocks:
    """
    Equality rows binding one Gram matrix to a target polynomial.

    Row k reads ``gram_rows[k] . svec(Q) + sum(free_rows[k][name] * name) = rhs[k]``
    for monomial ``monomials[k]``.
    """

    name: str
    basis: MonomialBasis
    monomials: Tuple[tuple, ...]
    gram_rows: sparse.csr_matrix
    free_rows: Tuple[Dict[str, float], ...]
    rhs: np.ndarray

    @property
    def gram_dimension(self) -> int:
        return len(self.basis)

    @property
    def free_names(self) -> List[str]:
        names: Dict[str, None] = {}
        for row in self.free_rows:
            for name in row:
                names[name] = None
        return list(names)

    def gram(self, svec_values) -> np.ndarray:
        return smat(svec_values, self.gram_dimension)


def gram_polynomial(Q, basis: MonomialBasis) -> Poly:
    """The polynomial z^T Q z."""
    Q = np.asarray(Q, dtype=float)
    terms: Dict[tuple, float] = {}
    for i, mi in enumerate(basis.monomials):
        for j, mj in enumerate(basis.monomials):
            key = tuple(a + b for a, b in zip(mi, mj))
            terms[key] = terms.get(key, 0.0) + Q[i, j]
    return Poly(basis.vars, terms)


def sos_blocks(p: Union[Poly, PolyExpr], basis: MonomialBasis, name: str = "sos") -> SosConstraintBlocks:
    """
    Encode "p is SOS over ``basis``" as Gram equality rows.

    There is one row per monomial appearing in p or in z z^T. Gram entries enter
    with coefficient 1 on the diagonal and sqrt(2) off it (svec convention);
    decision variables of p enter with the negated coefficient of their polynomial.

    Raises:
        ConfigError: If deg(p) exceeds twice the basis degree, or p uses a
            variable outside the basis
    """
    expr = PolyExpr.lift(p)
    extra = [v for v in expr.vars if v not in basis.vars]
    used_extra = [v for v in extra
                  if expr.const.degree_in(v) or any(q.degree_in(v) for q in expr.linear.values())]
    if used_extra:
        raise ConfigError(f"SOS target uses variables {used_extra} outside the basis")
    if expr.degree > 2 * basis.max_degree:
        raise ConfigError(f"degree overflow: SOS target of degree {expr.degree} "
                          f"over a basis of degree {basis.max_degree}")

    table = expr.coefficient_table(basis.vars + tuple(extra))
    if extra:
        table = {e[:len(basis.vars)]: row for e, row in table.items()}

    d = len(basis)
    products: Dict[tuple, List[Tuple[int, float]]] = {}
    for k, (i, j) in enumerate(svec_pairs(d)):
        key = tuple(a + b for a, b in zip(basis.monomials[i], basis.monomials[j]))
        products.setdefault(key, []).append((k, 1.0 if i == j else SQRT2))

    monomials = sorted(set(products) | set(table), key=grlex_key)
    rows, cols, vals = [], [], []
    free_rows: List[Dict[str, float]] = []
    rhs = np.zeros(len(monomials))
    for r, monomial in enumerate(monomials):
        for k, value in products.get(monomial, ()):
            rows.append(r)
            cols.append(k)
            vals.append(value)
        constant, decisions = table.get(monomial, (0.0, {}))
        rhs[r] = constant
        free_rows.append({n: -c for n, c in decisions.items() if c != 0.0})
    gram_rows = sparse.csr_matrix((vals, (rows, cols)), shape=(len(monomials), svec_size(d)))
    return SosConstraintBlocks(name, basis, tuple(monomials), gram_rows, tuple(free_rows), rhs)


def sos_basis_for(vars, degree: int) -> MonomialBasis:
    """Half-degree basis able to represent an SOS polynomial of the given degree."""
    return MonomialBasis(vars, (degree + 1) // 2)
