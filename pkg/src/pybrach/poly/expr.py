"""
Polynomial Expressions - Polynomials whose coefficients are affine in decision variables.

``PolyExpr`` = const + sum_k d_k * linear[k], where each d_k is a named scalar
decision variable and const, linear[k] are ``Poly`` values. This is what SOS
constraints are written in before they reach the SDP layer.
"""

from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from ..core.errors import ConfigError
from .polynomial import MonomialBasis, Poly, _merge_vars


class PolyExpr:
    """Polynomial affine in named decision variables."""

    __slots__ = ("const", "linear")

    def __init__(self, const: Optional[Poly] = None, linear: Optional[Mapping[str, Poly]] = None):
        self.const = const if const is not None else Poly(())
        self.linear: Dict[str, Poly] = {k: p for k, p in (linear or {}).items() if not p.is_zero()}

    @classmethod
    def lift(cls, value: Union["PolyExpr", Poly, float]) -> "PolyExpr":
        if isinstance(value, PolyExpr):
            return value
        if isinstance(value, Poly):
            return cls(value)
        return cls(Poly.constant(float(value)))

    @classmethod
    def decision(cls, name: str, poly: Optional[Poly] = None) -> "PolyExpr":
        """The term ``name * poly`` (poly defaults to 1)."""
        return cls(Poly(()), {name: poly if poly is not None else Poly.constant(1.0)})

    @classmethod
    def free(cls, prefix: str, basis: MonomialBasis) -> Tuple["PolyExpr", List[str]]:
        """Generic polynomial over a basis with one decision variable per monomial."""
        names = [f"{prefix}[{k}]" for k in range(len(basis))]
        linear = {name: Poly.monomial(basis.vars, m) for name, m in zip(names, basis.monomials)}
        return cls(Poly(basis.vars), linear), names

    @property
    def vars(self) -> Tuple[str, ...]:
        vars = self.const.vars
        for p in self.linear.values():
            vars = _merge_vars(vars, p.vars)
        return vars

    @property
    def decisions(self) -> Tuple[str, ...]:
        return tuple(self.linear)

    @property
    def degree(self) -> int:
        return max([self.const.degree] + [p.degree for p in self.linear.values()])

    def is_constant(self) -> bool:
        """True when no decision variable appears."""
        return not self.linear

    def __add__(self, other) -> "PolyExpr":
        other = PolyExpr.lift(other)
        linear = dict(self.linear)
        for name, p in other.linear.items():
            linear[name] = linear[name] + p if name in linear else p
        return PolyExpr(self.const + other.const, linear)

    __radd__ = __add__

    def __neg__(self) -> "PolyExpr":
        return PolyExpr(-self.const, {k: -p for k, p in self.linear.items()})

    def __sub__(self, other) -> "PolyExpr":
        return self + (-PolyExpr.lift(other))

    def __rsub__(self, other) -> "PolyExpr":
        return PolyExpr.lift(other) - self

    def __mul__(self, other) -> "PolyExpr":
        if isinstance(other, PolyExpr):
            if other.is_constant():
                other = other.const
            elif self.is_constant():
                return other * self.const
            else:
                raise ConfigError("product of two decision-dependent expressions is not affine")
        if isinstance(other, (Poly, int, float)):
            return PolyExpr(self.const * other, {k: p * other for k, p in self.linear.items()})
        return NotImplemented

    __rmul__ = __mul__

    def value(self, decisions: Mapping[str, float]) -> Poly:
        """Substitute numeric decision values."""
        result = self.const
        for name, p in self.linear.items():
            if name not in decisions:
                raise KeyError(f"no value for decision variable {name}")
            result = result + p * float(decisions[name])
        return result

    def partial_value(self, decisions: Mapping[str, float]) -> "PolyExpr":
        """Fix the decision variables present in ``decisions`` and keep the rest."""
        const = self.const
        linear = {}
        for name, p in self.linear.items():
            if name in decisions:
                const = const + p * float(decisions[name])
            else:
                linear[name] = p
        return PolyExpr(const, linear)

    def substitute(self, mapping) -> "PolyExpr":
        return PolyExpr(self.const.substitute(mapping),
                        {k: p.substitute(mapping) for k, p in self.linear.items()})

    def differentiate(self, var: str) -> "PolyExpr":
        return PolyExpr(self.const.differentiate(var),
                        {k: p.differentiate(var) for k, p in self.linear.items()})

    def coefficient_table(self, vars: Optional[Sequence[str]] = None) -> Dict[tuple, Tuple[float, Dict[str, float]]]:
        """
        Per monomial: the constant coefficient and the coefficient of each decision.

        Args:
            vars: Variable order for the exponent keys (defaults to ``self.vars``)
        """
        vars = tuple(vars) if vars is not None else self.vars
        table: Dict[tuple, Tuple[float, Dict[str, float]]] = {}
        for exponent, c in self.const.align(vars).terms.items():
            table[exponent] = (c, {})
        for name, p in self.linear.items():
            for exponent, c in p.align(vars).terms.items():
                constant, row = table.get(exponent, (0.0, {}))
                row[name] = row.get(name, 0.0) + c
                table[exponent] = (constant, row)
        return table

    def __repr__(self) -> str:
        return f"PolyExpr(const={self.const!r}, decisions={len(self.linear)})"


def sum_exprs(items: Iterable[Union[PolyExpr, Poly]]) -> PolyExpr:
    """Sum of expressions, accumulated per decision variable."""
    const = Poly(())
    linear: Dict[str, Poly] = {}
    for item in items:
        item = PolyExpr.lift(item)
        const = const + item.const
        for name, p in item.linear.items():
            linear[name] = linear[name] + p if name in linear else p
    return PolyExpr(const, linear)
