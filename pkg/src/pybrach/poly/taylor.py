"""
Taylor - Polynomial approximation of dynamics around a reference point.

Partial derivatives come from tensor-product central difference stencils,
extrapolated once in the step size. Variables are the state deviations
``x1 .. xn``, the input deviation ``u`` and the uncertainty ``w``. The
dynamics are affine in u and in w with no u*w term, so monomials of higher
degree in either are never generated.
"""

import logging
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError, NumericalFailure
from .polynomial import MonomialBasis, Poly, multinomial_factorial

logger = logging.getLogger(__name__)

DEFAULT_STEP = 2e-2

# Central stencils (offsets in units of h, weights before dividing by h^order).
STENCILS: Dict[int, Tuple[Tuple[int, float], ...]] = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
    5: ((-3, -0.5), (-2, 2.0), (-1, -2.5), (1, 2.5), (2, -2.0), (3, 0.5)),
}


def deviation_vars(n_states: int, with_input: bool = True, with_uncertainty: bool = True) -> Tuple[str, ...]:
    names = tuple(f"x{i + 1}" for i in range(n_states))
    if with_input:
        names += ("u",)
    if with_uncertainty:
        names += ("w",)
    return names


def _allowed(exponent: Sequence[int], n_states: int, with_input: bool, with_uncertainty: bool) -> bool:
    u = exponent[n_states] if with_input else 0
    w = exponent[n_states + int(with_input)] if with_uncertainty else 0
    return u <= 1 and w <= 1 and not (u and w)


class _Evaluator:
    """Caches f on the integer lattice of offsets in units of h/2."""

    def __init__(self, f, base: np.ndarray, half_step: float):
        self.f = f
        self.base = base
        self.half_step = half_step
        self.cache: Dict[Tuple[int, ...], np.ndarray] = {}

    def __call__(self, offset: Tuple[int, ...]) -> np.ndarray:
        if offset not in self.cache:
            value = np.asarray(self.f(self.base + self.half_step * np.array(offset)), dtype=float)
            if not np.all(np.isfinite(value)):
                raise NumericalFailure(f"non-finite dynamics during Taylor expansion at offset {offset}")
            self.cache[offset] = value
        return self.cache[offset]


def _derivative(evaluate: _Evaluator, exponent: Sequence[int], spacing: int, h: float) -> np.ndarray:
    """Mixed partial derivative of the given multi-index with stencil step spacing * (h/2)."""
    active = [(k, e) for k, e in enumerate(exponent) if e]
    total = np.zeros_like(evaluate(tuple([0] * len(exponent))))
    grids = [[]]
    for k, e in active:
        grids = [g + [(k, offset, weight)] for g in grids for offset, weight in STENCILS[e]]
    for combination in grids:
        offset = [0] * len(exponent)
        weight = 1.0
        for k, o, wgt in combination:
            offset[k] = o * spacing
            weight *= wgt
        total = total + weight * evaluate(tuple(offset))
    return total / h ** sum(exponent)


def taylor_dynamics(f: Callable[[np.ndarray, float, float], np.ndarray], x_ref, u_ref: float,
                    degree: int = 3, step: float = DEFAULT_STEP, with_uncertainty: bool = True,
                    with_input: bool = True) -> List[Poly]:
    """
    Taylor polynomials of f(x_ref + x, u_ref + u, w) - f(x_ref, u_ref, 0).

    Args:
        f: Dynamics ``f(x, u, w)``
        x_ref: Reference state
        u_ref: Reference input
        degree: Total degree of the expansion, 1..5
        step: Finite-difference step h (also applied to u and w)
        with_uncertainty: Include the ``w`` variable
        with_input: Include the ``u`` variable

    Returns:
        One Poly per state component, over ``deviation_vars(n)``

    Raises:
        ConfigError: If degree is outside 1..5
        NumericalFailure: If f returns non-finite values
    """
    if not 1 <= degree <= 5:
        raise ConfigError("Taylor degree must be between 1 and 5")
    x_ref = np.asarray(x_ref, dtype=float)
    n = x_ref.size
    vars = deviation_vars(n, with_input, with_uncertainty)

    def packed(z):
        x = z[:n]
        u = u_ref + z[n] if with_input else u_ref
        w = z[-1] if with_uncertainty else 0.0
        return f(x_ref + x, u, w)

    evaluate = _Evaluator(packed, np.zeros(len(vars)), step / 2.0)
    basis = MonomialBasis(vars, degree, min_degree=1,
                          keep=lambda e: _allowed(e, n, with_input, with_uncertainty))
    coefficients: List[Dict[tuple, float]] = [dict() for _ in range(n)]
    for exponent in basis.monomials:
        coarse = _derivative(evaluate, exponent, 2, step)
        fine = _derivative(evaluate, exponent, 1, step / 2.0)
        value = (4.0 * fine - coarse) / 3.0 / multinomial_factorial(exponent)
        for i in range(n):
            coefficients[i][exponent] = value[i]
    logger.debug("Taylor expansion of degree %d used %d evaluations", degree, len(evaluate.cache))
    return [Poly(vars, c) for c in coefficients]


def polynomialize(f, states: np.ndarray, inputs: np.ndarray, degree: int = 3,
                  step: float = DEFAULT_STEP, with_uncertainty: bool = True) -> List[List[Poly]]:
    """Taylor polynomials at every reference sample."""
    return [taylor_dynamics(f, x, u, degree, step, with_uncertainty) for x, u in zip(states, inputs)]
