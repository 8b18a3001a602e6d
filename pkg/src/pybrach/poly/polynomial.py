"""
Polynomial - Sparse multivariate polynomials with named variables.

A ``Poly`` maps exponent tuples to float coefficients over an ordered tuple of
variable names. Binary operations align operands by name: the result uses the
left operand's variables followed by any new ones from the right. Coefficients
with magnitude below ``PRUNE`` are dropped after every operation, and terms are
listed in graded lexicographic order.
"""

from itertools import combinations_with_replacement
from math import comb, factorial
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ConfigError

PRUNE = 1e-12

Exponent = Tuple[int, ...]
Scalar = Union[int, float, np.floating]


def grlex_key(exponent: Exponent) -> tuple:
    """Sort key: total degree first, then lexicographic with the first variable highest."""
    return (sum(exponent), tuple(-e for e in exponent))


def _merge_vars(a: Sequence[str], b: Sequence[str]) -> Tuple[str, ...]:
    extra = [v for v in b if v not in a]
    return tuple(a) + tuple(extra)


class Poly:
    """
    Immutable sparse polynomial.

    Args:
        vars: Variable names, in the order exponents refer to them
        terms: Mapping of exponent tuple to coefficient
    """

    __slots__ = ("vars", "terms")

    def __init__(self, vars: Sequence[str], terms: Optional[Mapping[Exponent, float]] = None):
        vars = tuple(vars)
        if len(set(vars)) != len(vars):
            raise ConfigError(f"duplicate polynomial variables in {vars}")
        clean: Dict[Exponent, float] = {}
        for exponent, coefficient in (terms or {}).items():
            exponent = tuple(int(e) for e in exponent)
            if len(exponent) != len(vars) or min(exponent, default=0) < 0:
                raise ConfigError(f"exponent {exponent} does not fit variables {vars}")
            coefficient = float(coefficient)
            if abs(coefficient) >= PRUNE:
                clean[exponent] = clean.get(exponent, 0.0) + coefficient
        object.__setattr__(self, "vars", vars)
        object.__setattr__(self, "terms", {e: c for e, c in clean.items() if abs(c) >= PRUNE})

    def __setattr__(self, name, value):
        raise AttributeError("Poly is immutable")

    # Construction

    @classmethod
    def constant(cls, value: float, vars: Sequence[str] = ()) -> "Poly":
        return cls(vars, {(0,) * len(tuple(vars)): value})

    @classmethod
    def variable(cls, name: str, vars: Optional[Sequence[str]] = None) -> "Poly":
        vars = tuple(vars) if vars is not None else (name,)
        if name not in vars:
            vars = vars + (name,)
        exponent = tuple(1 if v == name else 0 for v in vars)
        return cls(vars, {exponent: 1.0})

    @classmethod
    def monomial(cls, vars: Sequence[str], exponent: Exponent, coefficient: float = 1.0) -> "Poly":
        return cls(vars, {tuple(exponent): coefficient})

    @classmethod
    def quadratic_form(cls, matrix, vars: Sequence[str]) -> "Poly":
        """The polynomial x^T M x over the given variables."""
        matrix = np.asarray(matrix, dtype=float)
        n = len(vars)
        terms: Dict[Exponent, float] = {}
        for i in range(n):
            for j in range(n):
                exponent = [0] * n
                exponent[i] += 1
                exponent[j] += 1
                key = tuple(exponent)
                terms[key] = terms.get(key, 0.0) + matrix[i, j]
        return cls(vars, terms)

    @classmethod
    def linear_form(cls, coefficients, vars: Sequence[str], offset: float = 0.0) -> "Poly":
        """offset + sum_i c_i x_i."""
        n = len(vars)
        terms = {(0,) * n: offset}
        for i, c in enumerate(coefficients):
            exponent = [0] * n
            exponent[i] = 1
            terms[tuple(exponent)] = c
        return cls(vars, terms)

    # Inspection

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self.terms), default=-1)

    def degree_in(self, var: str) -> int:
        if var not in self.vars:
            return 0
        k = self.vars.index(var)
        return max((e[k] for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, exponent: Exponent) -> float:
        return self.terms.get(tuple(exponent), 0.0)

    def monomials(self) -> list:
        return sorted(self.terms, key=grlex_key)

    def support_vars(self) -> Tuple[str, ...]:
        """Variables that actually appear with a nonzero exponent."""
        return tuple(v for k, v in enumerate(self.vars) if any(e[k] for e in self.terms))

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        if not self.terms:
            return "Poly(0)"
        parts = []
        for exponent in self.monomials():
            factors = [v if e == 1 else f"{v}^{e}" for v, e in zip(self.vars, exponent) if e]
            parts.append(f"{self.terms[exponent]:+.6g}" + ("*" + "*".join(factors) if factors else ""))
        return "Poly(" + " ".join(parts) + ")"

    # Alignment

    def align(self, vars: Sequence[str]) -> "Poly":
        """Re-express over ``vars``, which must contain every variable in use."""
        vars = tuple(vars)
        if vars == self.vars:
            return self
        missing = [v for v in self.support_vars() if v not in vars]
        if missing:
            raise ConfigError(f"cannot align polynomial: variables {missing} would be lost")
        index = [self.vars.index(v) if v in self.vars else None for v in vars]
        terms = {}
        for exponent, c in self.terms.items():
            terms[tuple(exponent[k] if k is not None else 0 for k in index)] = c
        return Poly(vars, terms)

    def _aligned(self, other: "Poly") -> Tuple["Poly", "Poly"]:
        vars = _merge_vars(self.vars, other.vars)
        return self.align(vars), other.align(vars)

    def _lift(self, other) -> "Poly":
        if isinstance(other, Poly):
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Poly.constant(float(other), self.vars)
        return NotImplemented

    # Arithmetic

    def __add__(self, other) -> "Poly":
        other = self._lift(other)
        if other is NotImplemented:
            return NotImplemented
        a, b = self._aligned(other)
        terms = dict(a.terms)
        for exponent, c in b.terms.items():
            terms[exponent] = terms.get(exponent, 0.0) + c
        return Poly(a.vars, terms)

    def __radd__(self, other) -> "Poly":
        return self.__add__(other)

    def __neg__(self) -> "Poly":
        return Poly(self.vars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        other = self._lift(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "Poly":
        return (-self) + other

    def scale(self, factor: float) -> "Poly":
        return Poly(self.vars, {e: c * factor for e, c in self.terms.items()})

    def __mul__(self, other) -> "Poly":
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(float(other))
        if not isinstance(other, Poly):
            return NotImplemented
        a, b = self._aligned(other)
        terms: Dict[Exponent, float] = {}
        for ea, ca in a.terms.items():
            for eb, cb in b.terms.items():
                key = tuple(x + y for x, y in zip(ea, eb))
                terms[key] = terms.get(key, 0.0) + ca * cb
        return Poly(a.vars, terms)

    def __rmul__(self, other) -> "Poly":
        return self.__mul__(other)

    def __pow__(self, power: int) -> "Poly":
        if power < 0 or int(power) != power:
            raise ConfigError("polynomial powers must be non-negative integers")
        result = Poly.constant(1.0, self.vars)
        for _ in range(int(power)):
            result = result * self
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Poly.constant(float(other), self.vars)
        if not isinstance(other, Poly):
            return NotImplemented
        a, b = self._aligned(other)
        return a.terms == b.terms

    def __hash__(self):
        return hash(frozenset(self.align(sorted(self.support_vars())).terms.items()))

    def almost_equal(self, other: "Poly", tol: float = 1e-9) -> bool:
        a, b = self._aligned(other)
        keys = set(a.terms) | set(b.terms)
        return all(abs(a.coefficient(k) - b.coefficient(k)) <= tol for k in keys)

    # Calculus and evaluation

    def differentiate(self, var: str) -> "Poly":
        """Partial derivative with respect to ``var``."""
        if var not in self.vars:
            return Poly(self.vars)
        k = self.vars.index(var)
        terms = {}
        for exponent, c in self.terms.items():
            if exponent[k]:
                reduced = list(exponent)
                reduced[k] -= 1
                terms[tuple(reduced)] = c * exponent[k]
        return Poly(self.vars, terms)

    def gradient(self, vars: Sequence[str]) -> list:
        return [self.differentiate(v) for v in vars]

    def substitute(self, mapping: Mapping[str, Union["Poly", float]]) -> "Poly":
        """Replace variables by polynomials or numbers."""
        keep = tuple(v for v in self.vars if v not in mapping)
        images = {name: value if isinstance(value, Poly) else Poly.constant(float(value))
                  for name, value in mapping.items() if name in self.vars}
        result = Poly(keep)
        power_cache: Dict[Tuple[str, int], Poly] = {}
        for exponent, c in self.terms.items():
            term = Poly(keep, {tuple(e for v, e in zip(self.vars, exponent) if v in keep): c})
            for v, e in zip(self.vars, exponent):
                if e and v in images:
                    if (v, e) not in power_cache:
                        power_cache[(v, e)] = images[v] ** e
                    term = term * power_cache[(v, e)]
            result = result + term
        return result

    def evaluate(self, assignment: Mapping[str, float]) -> float:
        """
        Numeric value at a point.

        Raises:
            KeyError: If a variable in use has no assigned value
        """
        used = self.support_vars()
        missing = [v for v in used if v not in assignment]
        if missing:
            raise KeyError(f"no value assigned to {missing}")
        point = np.array([float(assignment.get(v, 0.0)) for v in self.vars])
        return float(sum(c * np.prod(point ** np.array(e)) for e, c in self.terms.items()))

    def evaluate_many(self, points) -> np.ndarray:
        """Values at the rows of ``points`` (columns ordered as ``self.vars``)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.terms:
            return np.zeros(points.shape[0])
        exponents = np.array(list(self.terms))
        coefficients = np.array(list(self.terms.values()))
        monomials = np.prod(points[:, None, :] ** exponents[None, :, :], axis=2)
        return monomials @ coefficients

    def truncate(self, max_degree: int) -> "Poly":
        return Poly(self.vars, {e: c for e, c in self.terms.items() if sum(e) <= max_degree})

    def filter(self, keep) -> "Poly":
        """Terms whose exponent satisfies the predicate ``keep``."""
        return Poly(self.vars, {e: c for e, c in self.terms.items() if keep(e)})

    # Serialization

    def to_text(self) -> str:
        """Canonical text: header naming the variables, then ``coeff e1 ... en`` per term."""
        lines = ["# vars " + " ".join(self.vars)]
        for exponent in self.monomials():
            lines.append(" ".join([repr(self.terms[exponent])] + [str(e) for e in exponent]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Poly":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines or not lines[0].startswith("# vars"):
            raise ConfigError("polynomial text lacks a '# vars' header")
        vars = tuple(lines[0].split()[2:])
        terms = {}
        for line in lines[1:]:
            fields = line.split()
            terms[tuple(int(e) for e in fields[1:])] = float(fields[0])
        return cls(vars, terms)


class MonomialBasis:
    """
    All monomials in ``vars`` with total degree between ``min_degree`` and ``max_degree``.

    Monomials are in graded lexicographic order; with ``min_degree = 0`` there are
    C(n + d, d) of them.
    """

    def __init__(self, vars: Sequence[str], max_degree: int, min_degree: int = 0,
                 keep=None):
        if max_degree < 0 or min_degree < 0 or min_degree > max_degree:
            raise ConfigError("invalid monomial basis degrees")
        self.vars = tuple(vars)
        self.max_degree = max_degree
        self.min_degree = min_degree
        n = len(self.vars)
        monomials = []
        for degree in range(min_degree, max_degree + 1):
            for combo in combinations_with_replacement(range(n), degree):
                exponent = [0] * n
                for k in combo:
                    exponent[k] += 1
                monomials.append(tuple(exponent))
        if keep is not None:
            monomials = [m for m in monomials if keep(m)]
        self.monomials = sorted(monomials, key=grlex_key)
        self.index = {m: i for i, m in enumerate(self.monomials)}

    def __len__(self) -> int:
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __repr__(self) -> str:
        return f"MonomialBasis({self.vars}, degree {self.min_degree}..{self.max_degree}, size {len(self)})"

    @staticmethod
    def count(n_vars: int, degree: int) -> int:
        return comb(n_vars + degree, degree)

    def polys(self) -> list:
        return [Poly.monomial(self.vars, m) for m in self.monomials]

    def vector(self, point) -> np.ndarray:
        """Monomial values at a point given in ``vars`` order."""
        point = np.asarray(point, dtype=float)
        return np.array([np.prod(point ** np.array(m)) for m in self.monomials])


def exponents_up_to(n_vars: int, degree: int) -> Iterable[Exponent]:
    """Every exponent tuple of total degree 1..degree, graded-lex ordered."""
    return MonomialBasis([f"v{i}" for i in range(n_vars)], degree, min_degree=1).monomials


def multinomial_factorial(exponent: Exponent) -> int:
    result = 1
    for e in exponent:
        result *= factorial(e)
    return result
