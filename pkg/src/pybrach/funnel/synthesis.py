"""
Synthesis - Funnel certification by alternating sum-of-squares programs.

At every sample t_i the funnel must satisfy, over deviations x and uncertainty w,

    r' - V' - L (V - r) - Lw1 (w - w_lb) - Lw2 (w_ub - w) - Lt1 c_i - eps |x|^2   SOS
    u-bar - (u_min - u_ref) + Lu1 (V - r) - Lt2 c_i                              SOS
    (u_max - u_ref) - u-bar + Lu2 (V - r) - Lt3 c_i                              SOS

with V = x^T (S + P) x, c_i = (t_i - t0)(tf - t_i), Lw SOS and Lt, Lu >= 0.
The conditions are bilinear, so three convex programs alternate:

    step 1  V, r, u-bar fixed: per-sample slack gamma, multipliers L, Lu, Lw, Lt
    step 2  L, Lu, V fixed:    r and the controller, maximizing the integral of r
    step 3  L, Lu, u-bar fixed: r and P, maximizing the integral of r

r' and the time derivative of S + P are finite differences across neighbouring
samples, so steps 2 and 3 are one coupled program over all samples.

Step 1 certifies a funnel when every gamma is negative. Steps 2 and 3 keep part
of that slack in each constraint, so the next step 1 finds gamma < 0 again.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..control.tvlqr import RiccatiSolution
from ..core.errors import ConfigError, NotCertifiedError
from ..core.event_bus import EventType, get_event_bus
from ..model.params import OUTPUT_INDICES, UncertaintyBox
from ..model.trajectory import Trajectory
from ..poly.expr import PolyExpr, sum_exprs
from ..poly.polynomial import MonomialBasis, Poly
from ..poly.sos import SosConstraintBlocks, sos_basis_for, sos_blocks
from ..poly.taylor import DEFAULT_STEP, deviation_vars, polynomialize
from ..sdp.problem import SdpProblem, assemble
from ..sdp.solver import SdpSolution, solve
from .model import Certificates, Funnel

logger = logging.getLogger(__name__)

# Lower bound on the step-1 slack; keeps the program bounded for tiny levels.
GAMMA_FLOOR = -1.0

Scalar = Union[float, PolyExpr]
Polynomial = Union[Poly, PolyExpr]


@dataclass(frozen=True)
class SynthesisSettings:
    """Degrees, tolerances and solver options of the alternation."""

    n_samples: int = 40
    dynamics_degree: int = 3
    multiplier_degree: int = 4
    torque_multiplier_degree: int = 0
    max_rounds: int = 30
    convergence: float = 1e-3
    epsilon: float = 1e-4
    r_min: float = 1e-6
    # slack steps 2 and 3 keep in every constraint, capped by the slack step 1 found
    gamma_tolerance: float = 1e-6
    level_rates: Tuple[float, ...] = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0)
    solver: str = "CLARABEL"
    tolerance: float = 1e-7
    max_iters: int = 200
    taylor_step: float = DEFAULT_STEP
    threads: int = 1

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigError("synthesis needs at least two sample intervals")
        if not 1 <= self.dynamics_degree <= 5:
            raise ConfigError("dynamics degree must be between 1 and 5")
        if self.multiplier_degree < 0:
            raise ConfigError("multiplier degree must be non-negative")
        if self.torque_multiplier_degree < 0 or self.torque_multiplier_degree % 2:
            raise ConfigError("torque multiplier degree must be even and non-negative")
        if self.max_rounds < 1 or self.threads < 1:
            raise ConfigError("max_rounds and threads must be at least 1")
        if self.epsilon < 0 or self.r_min <= 0:
            raise ConfigError("epsilon must be >= 0 and r_min > 0")
        if self.gamma_tolerance < 0:
            raise ConfigError("gamma_tolerance must be non-negative")
        if not self.level_rates:
            raise ConfigError("at least one initial level rate is required")
        object.__setattr__(self, "level_rates", tuple(float(c) for c in self.level_rates))


@dataclass(frozen=True)
class SynthesisProblem:
    """
    Everything the alternation needs at the sample times.

    Args:
        times: N+1 sample instants (those of the Riccati solution)
        dynamics: Per sample, Taylor polynomials of the dynamics over
            ``x1 .. xn, u`` and ``w`` when an uncertainty box is given
        S: Riccati shapes at the samples
        K: Full-state TVLQR gains at the samples, (N+1, n)
        u_ref: Reference torque at the samples
        limits: Torque limits (u_min, u_max)
        uncertainty: Stiffness uncertainty box, or None
        output_indices: Measured coordinates
    """

    times: np.ndarray
    dynamics: Tuple[Tuple[Poly, ...], ...]
    S: np.ndarray
    K: np.ndarray
    u_ref: np.ndarray
    limits: Tuple[float, float]
    uncertainty: Optional[UncertaintyBox] = None
    output_indices: Tuple[int, ...] = OUTPUT_INDICES
    _open_loop: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        S = np.asarray(self.S, dtype=float)
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        n = S.shape[1]
        if len(self.dynamics) != len(times) or S.shape[0] != len(times) or K.shape != (len(times), n):
            raise ConfigError("dynamics, S and K must have one entry per sample")
        if any(len(f) != n for f in self.dynamics):
            raise ConfigError("one dynamics polynomial per state required")
        outputs = tuple(int(k) for k in self.output_indices)
        if not outputs or any(k < 0 or k >= n for k in outputs):
            raise ConfigError(f"output indices {outputs} outside the state")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "u_ref", np.asarray(self.u_ref, dtype=float).reshape(-1))
        object.__setattr__(self, "limits", (float(self.limits[0]), float(self.limits[1])))
        object.__setattr__(self, "output_indices", outputs)
        object.__setattr__(self, "_open_loop", tuple(_split_input(f) for f in self.dynamics))

    @property
    def n_states(self) -> int:
        return self.S.shape[1]

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    @property
    def xvars(self) -> Tuple[str, ...]:
        return deviation_vars(self.n_states, with_input=False, with_uncertainty=False)

    @property
    def vars(self) -> Tuple[str, ...]:
        return deviation_vars(self.n_states, with_input=False,
                              with_uncertainty=self.uncertainty is not None)

    def open_loop(self, i: int) -> Tuple[List[Poly], List[Poly]]:
        """Drift f0(x, w) and input column f1(x) at sample i, f = f0 + f1 u."""
        return self._open_loop[i]

    def initial_controller(self) -> np.ndarray:
        """TVLQR law -K x restricted to the measured coordinates, no offset."""
        gains = -self.K[:, list(self.output_indices)]
        return np.column_stack([np.zeros(len(self.times)), gains])

    def funnel(self, r, controller, P=None) -> Funnel:
        P = np.zeros_like(self.S) if P is None else P
        return Funnel(self.times, self.S, P, r, controller, self.u_ref, self.limits,
                      self.uncertainty, self.output_indices)

    @classmethod
    def from_reference(cls, dynamics: Callable[[np.ndarray, float, float], np.ndarray],
                       reference: Trajectory, riccati: RiccatiSolution,
                       limits: Tuple[float, float], uncertainty: Optional[UncertaintyBox],
                       settings: SynthesisSettings,
                       output_indices: Sequence[int] = OUTPUT_INDICES) -> "SynthesisProblem":
        """
        Polynomialize ``dynamics(x, u, w)`` at the Riccati sample times.

        Raises:
            ConfigError: If the Riccati samples do not match ``settings.n_samples``
        """
        times = riccati.times
        if len(times) != settings.n_samples + 1:
            raise ConfigError(f"Riccati solution has {len(times)} samples, "
                              f"synthesis expects {settings.n_samples + 1}")
        states = np.array([reference.state_at(t) for t in times])
        inputs = np.array([reference.input_at(t) for t in times])
        polys = polynomialize(dynamics, states, inputs, settings.dynamics_degree,
                              settings.taylor_step, with_uncertainty=uncertainty is not None)
        return cls(times, tuple(tuple(p) for p in polys), riccati.S, riccati.K[:, 0, :], inputs,
                   limits, uncertainty, tuple(output_indices))


@dataclass(frozen=True)
class SynthesisResult:
    funnel: Funnel
    certificates: Certificates
    history: Tuple[float, ...]
    rounds: int
    converged: bool


def _split_input(polys: Sequence[Poly]) -> Tuple[List[Poly], List[Poly]]:
    f0 = [p.substitute({"u": 0.0}) for p in polys]
    f1 = [p.differentiate("u").substitute({"u": 0.0}) for p in polys]
    return f0, f1


class _MatrixExpr:
    """Symmetric matrix affine in named scalar decisions."""

    def __init__(self, const, terms: Optional[Dict[str, np.ndarray]] = None):
        self.const = np.asarray(const, dtype=float)
        self.terms = dict(terms or {})

    @classmethod
    def decision(cls, prefix: str, n: int) -> "_MatrixExpr":
        terms = {}
        for a in range(n):
            for b in range(a, n):
                C = np.zeros((n, n))
                C[a, b] = C[b, a] = 1.0
                terms[f"{prefix}[{a},{b}]"] = C
        return cls(np.zeros((n, n)), terms)

    def __add__(self, other) -> "_MatrixExpr":
        other = other if isinstance(other, _MatrixExpr) else _MatrixExpr(other)
        terms = dict(self.terms)
        for name, C in other.terms.items():
            terms[name] = terms[name] + C if name in terms else C
        return _MatrixExpr(self.const + other.const, terms)

    def __neg__(self) -> "_MatrixExpr":
        return self * -1.0

    def __sub__(self, other) -> "_MatrixExpr":
        other = other if isinstance(other, _MatrixExpr) else _MatrixExpr(other)
        return self + (-other)

    def __mul__(self, factor: float) -> "_MatrixExpr":
        return _MatrixExpr(self.const * factor, {k: C * factor for k, C in self.terms.items()})

    __rmul__ = __mul__

    def value(self, scalars: Dict[str, float]) -> np.ndarray:
        result = self.const.copy()
        for name, C in self.terms.items():
            result += scalars[name] * C
        return result

    def trace_coefficients(self) -> Dict[str, float]:
        return {name: float(np.trace(C)) for name, C in self.terms.items()}

    def quadratic(self, vars: Sequence[str]) -> PolyExpr:
        """x^T M x."""
        return PolyExpr(Poly.quadratic_form(self.const, vars),
                        {name: Poly.quadratic_form(C, vars) for name, C in self.terms.items()})

    def bilinear(self, vars: Sequence[str], f: Sequence[Polynomial]) -> PolyExpr:
        """
        2 x^T M f.

        Raises:
            ConfigError: If both M and f depend on decisions
        """
        xs = [Poly.variable(v, vars) for v in vars]
        n = len(vars)
        rows = []
        for a in range(n):
            entries = [f[b] * (2.0 * self.const[a, b]) for b in range(n) if self.const[a, b] != 0.0]
            if entries:
                rows.append(sum_exprs(entries) * xs[a])
        result = sum_exprs(rows)
        linear = {}
        for name, C in self.terms.items():
            acc = Poly(vars)
            for a, b in zip(*np.nonzero(C)):
                fb = PolyExpr.lift(f[b])
                if not fb.is_constant():
                    raise ConfigError("shape and vector field both depend on decisions")
                acc = acc + xs[a] * fb.const * (2.0 * C[a, b])
            linear[name] = acc
        return result + PolyExpr(Poly(vars), linear)


def _rate(values: Sequence, times: np.ndarray, i: int):
    """Central difference at sample i, one-sided at the ends."""
    lo, hi = max(i - 1, 0), min(i + 1, len(times) - 1)
    return (values[hi] - values[lo]) * (1.0 / (times[hi] - times[lo]))


def _time_factor(times: np.ndarray, i: int) -> float:
    return float((times[i] - times[0]) * (times[-1] - times[i]))


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    weights = np.zeros(len(times))
    weights[:-1] += dt / 2.0
    weights[1:] += dt / 2.0
    return weights


def _controller_poly(coefficients, xvars: Sequence[str], outputs: Sequence[int]) -> Poly:
    return Poly.linear_form(coefficients[1:], [xvars[k] for k in outputs], float(coefficients[0]))


def _controller_decision(prefix: str, xvars: Sequence[str], outputs: Sequence[int]) -> Tuple[PolyExpr, List[str]]:
    names = [f"{prefix}.k[{j}]" for j in range(1 + len(outputs))]
    terms = [PolyExpr.decision(names[0])]
    terms += [PolyExpr.decision(names[j + 1], Poly.variable(xvars[k], xvars)) for j, k in enumerate(outputs)]
    return sum_exprs(terms), names


def _vdot(M: _MatrixExpr, Mdot: _MatrixExpr, f0, f1, u_bar: Polynomial, xvars) -> PolyExpr:
    closed_loop = [f0[b] + f1[b] * u_bar for b in range(len(xvars))]
    return M.bilinear(xvars, closed_loop) + Mdot.quadratic(xvars)


def vdot_poly(funnel: Funnel, i: int, dynamics: Sequence[Poly]) -> Poly:
    """
    Closed-loop derivative of V at sample i as a polynomial in (x, w).

    Args:
        funnel: Funnel whose shape, level and controller are used
        i: Sample index
        dynamics: Taylor polynomials of the dynamics at sample i over ``x1 .. xn, u[, w]``
    """
    xvars = deviation_vars(funnel.n_states, with_input=False, with_uncertainty=False)
    f0, f1 = _split_input(dynamics)
    M = [_MatrixExpr(m) for m in funnel.M]
    u_bar = _controller_poly(funnel.controller[i], xvars, funnel.output_indices)
    return _vdot(M[i], _rate(M, funnel.times, i), f0, f1, u_bar, xvars).const


def build_invariance_constraint(name: str, vars: Sequence[str], *, vdot: Polynomial, V: Polynomial,
                                r: Scalar, rdot: Scalar, L: Polynomial, epsilon: float,
                                Lw: Optional[Tuple[Polynomial, Polynomial]] = None,
                                box: Optional[UncertaintyBox] = None, time_term: Scalar = 0.0,
                                gamma: Scalar = 0.0) -> SosConstraintBlocks:
    """
    The level-set invariance condition at one sample as an SOS constraint over ``vars``.

    ``time_term`` is Lt1 * c_i already multiplied out; ``gamma`` is added to the
    constant term (the step-1 slack).
    """
    xvars = [v for v in vars if v != "w"]
    margin = Poly.quadratic_form(epsilon * np.eye(len(xvars)), xvars)
    target = PolyExpr.lift(rdot) - vdot - L * (V - r) - time_term + gamma - margin
    if Lw is not None:
        if box is None:
            raise ConfigError("uncertainty multipliers need an uncertainty box")
        w = Poly.variable("w", vars)
        target = target - Lw[0] * (w - box.w_lb) - Lw[1] * (box.w_ub - w)
    return sos_blocks(target, sos_basis_for(vars, max(target.degree, 2)), name)


def build_torque_constraints(name: str, xvars: Sequence[str], *, u_bar: Polynomial, u_ref: float,
                             limits: Tuple[float, float], V: Polynomial, r: Scalar,
                             Lu1: Polynomial, Lu2: Polynomial, time_terms: Tuple[Scalar, Scalar] = (0.0, 0.0),
                             gamma: Scalar = 0.0) -> Tuple[SosConstraintBlocks, SosConstraintBlocks]:
    """Lower and upper torque limits on the level set {V <= r} as two SOS constraints."""
    u_min, u_max = limits
    lower = PolyExpr.lift(u_bar) - (u_min - u_ref) + Lu1 * (V - r) - time_terms[0] + gamma
    upper = PolyExpr.lift(u_max - u_ref) - u_bar + Lu2 * (V - r) - time_terms[1] + gamma
    return (sos_blocks(lower, sos_basis_for(xvars, max(lower.degree, 2)), f"{name}.lower"),
            sos_blocks(upper, sos_basis_for(xvars, max(upper.degree, 2)), f"{name}.upper"))


@dataclass
class _SampleParts:
    blocks: List[SosConstraintBlocks] = field(default_factory=list)
    scalars: List[str] = field(default_factory=list)
    inequalities: List[Tuple[Dict[str, float], float]] = field(default_factory=list)
    multipliers: Dict[str, PolyExpr] = field(default_factory=dict)
    lt_names: Dict[int, str] = field(default_factory=dict)

    def nonnegative(self, name: str) -> PolyExpr:
        self.scalars.append(name)
        self.inequalities.append(({name: 1.0}, 0.0))
        return PolyExpr.decision(name)

    def sos_multiplier(self, name: str, vars: Sequence[str], degree: int) -> PolyExpr:
        half = degree // 2
        if half == 0:
            return self.nonnegative(name)
        expr, _ = PolyExpr.free(name, MonomialBasis(vars, 2 * half))
        self.blocks.append(sos_blocks(expr, MonomialBasis(vars, half), f"{name}.sos"))
        return expr


def _sample_parts(problem: SynthesisProblem, settings: SynthesisSettings, i: int, M: _MatrixExpr,
                  Mdot: _MatrixExpr, r: Scalar, rdot: Scalar, u_bar: Polynomial,
                  L: Optional[Poly] = None, Lu: Optional[Tuple[Poly, Poly]] = None,
                  with_gamma: bool = False, slack: float = 0.0) -> _SampleParts:
    """
    Constraints of sample i; multipliers passed in are fixed, the others are decided.

    Without ``with_gamma`` every constraint must hold with ``slack`` to spare.
    """
    prefix = f"s{i}"
    parts = _SampleParts()
    xvars, vars = problem.xvars, problem.vars
    c = _time_factor(problem.times, i)

    def time_term(k: int) -> Scalar:
        if c <= 0.0:
            return 0.0
        name = f"{prefix}.Lt{k}"
        parts.lt_names[k] = name
        return parts.nonnegative(name) * c

    gamma: Scalar = -slack
    if with_gamma:
        name = f"{prefix}.gamma"
        parts.scalars.append(name)
        parts.inequalities.append(({name: 1.0}, GAMMA_FLOOR))
        gamma = PolyExpr.decision(name)

    if L is None:
        L, _ = PolyExpr.free(f"{prefix}.L", MonomialBasis(vars, settings.multiplier_degree))
        parts.multipliers["L"] = L
    if Lu is None:
        Lu = tuple(parts.sos_multiplier(f"{prefix}.Lu{k}", xvars, settings.torque_multiplier_degree)
                   for k in (1, 2))
        parts.multipliers["Lu1"], parts.multipliers["Lu2"] = Lu
    Lw = None
    if problem.uncertainty is not None:
        Lw = tuple(parts.sos_multiplier(f"{prefix}.Lw{k}", vars, settings.multiplier_degree)
                   for k in (1, 2))
        parts.multipliers["Lw1"], parts.multipliers["Lw2"] = Lw

    f0, f1 = problem.open_loop(i)
    V = M.quadratic(xvars)
    vdot = _vdot(M, Mdot, f0, f1, u_bar, xvars)
    parts.blocks.append(build_invariance_constraint(
        f"{prefix}.invariance", vars, vdot=vdot, V=V, r=r, rdot=rdot, L=L,
        epsilon=settings.epsilon, Lw=Lw, box=problem.uncertainty, time_term=time_term(1), gamma=gamma))
    parts.blocks.extend(build_torque_constraints(
        f"{prefix}.torque", xvars, u_bar=u_bar, u_ref=float(problem.u_ref[i]), limits=problem.limits,
        V=V, r=r, Lu1=Lu[0], Lu2=Lu[1], time_terms=(time_term(2), time_term(3)), gamma=gamma))
    return parts


def _solve(problem: SdpProblem, settings: SynthesisSettings) -> SdpSolution:
    return solve(problem, tol=settings.tolerance, max_iters=settings.max_iters, solver=settings.solver)


def _zero(vars=()) -> Poly:
    return Poly(vars)


def _decided(parts: _SampleParts, key: str, solution: SdpSolution) -> Optional[Poly]:
    if key not in parts.multipliers:
        return None
    if not solution.ok:
        return _zero()
    return parts.multipliers[key].value(solution.scalars)


def _time_multipliers(parts: _SampleParts, solution: SdpSolution) -> np.ndarray:
    values = np.zeros(3)
    if solution.ok:
        for k, name in parts.lt_names.items():
            values[k - 1] = max(solution.scalars[name], 0.0)
    return values


def step1_multipliers(problem: SynthesisProblem, funnel: Funnel, settings: SynthesisSettings,
                      round_index: int = 0) -> Tuple[Certificates, np.ndarray]:
    """
    Fix V, r and u-bar and find multipliers sample by sample.

    Each sample minimizes a slack gamma added to all three constraints, so
    gamma < 0 certifies the sample with margin. Samples whose program fails
    report gamma = inf.

    Returns:
        (certificates, gamma per sample)
    """
    times = problem.times
    xvars = problem.xvars
    M = [_MatrixExpr(m) for m in funnel.M]
    r = [float(v) for v in funnel.r]

    def solve_sample(i: int):
        u_bar = _controller_poly(funnel.controller[i], xvars, funnel.output_indices)
        parts = _sample_parts(problem, settings, i, M[i], _rate(M, times, i), r[i], _rate(r, times, i),
                              u_bar, with_gamma=True)
        sdp = assemble(parts.blocks, parts.scalars, objective={f"s{i}.gamma": 1.0},
                       inequalities=parts.inequalities)
        solution = _solve(sdp, settings)
        if not solution.ok:
            logger.warning("step 1 at sample %d: %s", i, solution.status.value)
        return parts, solution

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        outcomes = list(pool.map(solve_sample, range(len(times))))

    gamma = np.array([s.scalars[f"s{i}.gamma"] if s.ok else math.inf
                      for i, (_, s) in enumerate(outcomes)])
    with_w = problem.uncertainty is not None
    certificates = Certificates(
        L=tuple(_decided(p, "L", s) for p, s in outcomes),
        Lu1=tuple(_decided(p, "Lu1", s) for p, s in outcomes),
        Lu2=tuple(_decided(p, "Lu2", s) for p, s in outcomes),
        Lw1=tuple(_decided(p, "Lw1", s) for p, s in outcomes) if with_w else None,
        Lw2=tuple(_decided(p, "Lw2", s) for p, s in outcomes) if with_w else None,
        Lt=np.array([_time_multipliers(p, s) for p, s in outcomes]),
        gamma=gamma,
    )
    logger.info("step 1 (round %d): max gamma %.3e", round_index, gamma.max())
    get_event_bus().emit(EventType.STEP_SOLVED, step=1, round=round_index, max_gamma=float(gamma.max()))
    return certificates, gamma


def _slack(settings: SynthesisSettings, certificates: Certificates, i: int) -> float:
    """Slack for sample i: the configured tolerance, but never more than step 1 certified there."""
    if i >= len(certificates.gamma) or not math.isfinite(certificates.gamma[i]):
        return 0.0
    return min(settings.gamma_tolerance, max(-float(certificates.gamma[i]), 0.0))


def _level_decisions(n_intervals: int) -> List[Scalar]:
    return [PolyExpr.decision(f"r[{i}]") for i in range(n_intervals)] + [1.0]


def _coupled_solve(problem: SynthesisProblem, settings: SynthesisSettings, sample_parts: List[_SampleParts],
                   extra_blocks: List[SosConstraintBlocks], extra_scalars: List[str],
                   extra_inequalities: List[Tuple[Dict[str, float], float]]) -> SdpSolution:
    N = problem.n_intervals
    weights = _trapezoid_weights(problem.times)
    blocks = [b for p in sample_parts for b in p.blocks] + extra_blocks
    scalars = [name for p in sample_parts for name in p.scalars] + extra_scalars
    scalars += [f"r[{i}]" for i in range(N)]
    inequalities = [q for p in sample_parts for q in p.inequalities] + extra_inequalities
    inequalities += [({f"r[{i}]": 1.0}, settings.r_min) for i in range(N)]
    objective = {f"r[{i}]": -weights[i] for i in range(N)}
    sdp = assemble(blocks, scalars, objective, inequalities=inequalities, offset=-weights[N])
    return _solve(sdp, settings)


def _updated_certificates(certificates: Certificates, sample_parts: List[_SampleParts],
                          solution: SdpSolution) -> Certificates:
    with_w = certificates.Lw1 is not None
    return replace(
        certificates,
        Lw1=tuple(_decided(p, "Lw1", solution) for p in sample_parts) if with_w else None,
        Lw2=tuple(_decided(p, "Lw2", solution) for p in sample_parts) if with_w else None,
        Lt=np.array([_time_multipliers(p, solution) for p in sample_parts]),
    )


def _levels(solution: SdpSolution, n_intervals: int) -> np.ndarray:
    return np.array([solution.scalars[f"r[{i}]"] for i in range(n_intervals)] + [1.0])


def step2_controller(problem: SynthesisProblem, funnel: Funnel, certificates: Certificates,
                     settings: SynthesisSettings,
                     round_index: int = 0) -> Optional[Tuple[Funnel, Certificates]]:
    """
    Fix L, Lu and V; choose r and the controller to maximize the integral of r.

    Returns:
        Updated funnel and certificates, or None when the program fails
    """
    times, xvars, N = problem.times, problem.xvars, problem.n_intervals
    M = [_MatrixExpr(m) for m in funnel.M]
    r = _level_decisions(N)
    sample_parts, controller_names = [], []
    for i in range(N + 1):
        u_bar, names = _controller_decision(f"s{i}", xvars, funnel.output_indices)
        controller_names.append(names)
        parts = _sample_parts(problem, settings, i, M[i], _rate(M, times, i), r[i], _rate(r, times, i),
                              u_bar, L=certificates.L[i], Lu=(certificates.Lu1[i], certificates.Lu2[i]),
                              slack=_slack(settings, certificates, i))
        parts.scalars.extend(names)
        sample_parts.append(parts)
    solution = _coupled_solve(problem, settings, sample_parts, [], [], [])
    get_event_bus().emit(EventType.STEP_SOLVED, step=2, round=round_index, status=solution.status.value,
                         integral=-solution.objective if solution.ok else math.nan)
    if not solution.ok:
        logger.warning("step 2 (round %d) failed: %s", round_index, solution.status.value)
        return None
    controller = np.array([[solution.scalars[n] for n in names] for names in controller_names])
    updated = replace(funnel, r=_levels(solution, N), controller=controller)
    logger.info("step 2 (round %d): integral of r %.6g", round_index, updated.integral())
    return updated, _updated_certificates(certificates, sample_parts, solution)


def _psd_part(P: np.ndarray) -> np.ndarray:
    eigenvalues, vectors = np.linalg.eigh(0.5 * (P + P.T))
    return (vectors * np.maximum(eigenvalues, 0.0)) @ vectors.T


def step3_lyapunov(problem: SynthesisProblem, funnel: Funnel, certificates: Certificates,
                   settings: SynthesisSettings,
                   round_index: int = 0) -> Optional[Tuple[Funnel, Certificates]]:
    """
    Fix u-bar, L and Lu; choose r and P to maximize the integral of r.

    P(t_i) is PSD with trace(P) <= trace(S) at every sample and zero at tf.

    Returns:
        Updated funnel and certificates, or None when the program fails
    """
    times, xvars, N, n = problem.times, problem.xvars, problem.n_intervals, problem.n_states
    P = [_MatrixExpr.decision(f"s{i}.P", n) for i in range(N)] + [_MatrixExpr(np.zeros((n, n)))]
    M = [_MatrixExpr(problem.S[i]) + P[i] for i in range(N + 1)]
    r = _level_decisions(N)
    sample_parts = []
    psd_blocks, psd_scalars, trace_limits = [], [], []
    for i in range(N + 1):
        u_bar = _controller_poly(funnel.controller[i], xvars, funnel.output_indices)
        sample_parts.append(_sample_parts(problem, settings, i, M[i], _rate(M, times, i), r[i],
                                          _rate(r, times, i), u_bar, L=certificates.L[i],
                                          Lu=(certificates.Lu1[i], certificates.Lu2[i]),
                                          slack=_slack(settings, certificates, i)))
        if i < N:
            psd_blocks.append(sos_blocks(P[i].quadratic(xvars), MonomialBasis(xvars, 1, min_degree=1),
                                         f"s{i}.P.psd"))
            psd_scalars.extend(P[i].terms)
            trace_limits.append(({k: -v for k, v in P[i].trace_coefficients().items()},
                                 -float(np.trace(problem.S[i]))))
    solution = _coupled_solve(problem, settings, sample_parts, psd_blocks, psd_scalars, trace_limits)
    get_event_bus().emit(EventType.STEP_SOLVED, step=3, round=round_index, status=solution.status.value,
                         integral=-solution.objective if solution.ok else math.nan)
    if not solution.ok:
        logger.warning("step 3 (round %d) failed: %s", round_index, solution.status.value)
        return None
    shapes = np.array([_psd_part(p.value(solution.scalars)) for p in P])
    updated = replace(funnel, r=_levels(solution, N), P=shapes)
    logger.info("step 3 (round %d): integral of r %.6g", round_index, updated.integral())
    return updated, _updated_certificates(certificates, sample_parts, solution)


def initial_levels(problem: SynthesisProblem, settings: SynthesisSettings,
                   controller: Optional[np.ndarray] = None) -> Tuple[Funnel, Certificates]:
    """
    Largest level profile r(t) = exp(c (t - tf) / (tf - t0)) that step 1 certifies.

    Rates are tried from the largest integral down; the first certified one wins.

    Raises:
        NotCertifiedError: If no configured rate is certified; diagnostics hold
            the worst slack per rate
    """
    controller = problem.initial_controller() if controller is None else np.asarray(controller, dtype=float)
    times = problem.times
    s = (times - times[-1]) / (times[-1] - times[0])
    diagnostics: Dict[float, float] = {}
    worst: Dict[float, int] = {}
    for rate in sorted(settings.level_rates):
        r = np.exp(rate * s)
        r[-1] = 1.0
        funnel = problem.funnel(r, controller)
        certificates, gamma = step1_multipliers(problem, funnel, settings)
        diagnostics[rate] = float(gamma.max())
        worst[rate] = int(np.argmax(gamma))
        if gamma.max() < 0.0:
            logger.info("initial levels: rate %g certified, integral %.6g", rate, funnel.integral())
            return funnel, certificates
        logger.info("initial levels: rate %g rejected (max gamma %.3e at sample %d)",
                    rate, gamma.max(), worst[rate])
    raise NotCertifiedError("no initial level profile could be certified",
                            {"max_gamma": diagnostics, "worst_sample": worst})


def _alternate(problem: SynthesisProblem, funnel: Funnel, certificates: Certificates,
               settings: SynthesisSettings, with_controller: bool) -> SynthesisResult:
    bus = get_event_bus()
    history = [funnel.integral()]
    rounds = 0
    converged = False
    for k in range(1, settings.max_rounds + 1):
        if k > 1:
            candidate, gamma = step1_multipliers(problem, funnel, settings, k)
            if not gamma.max() < 0.0:
                logger.warning("round %d: step 1 lost feasibility (max gamma %.3e); stopping", k, gamma.max())
                break
            certificates = candidate
        stopped = False
        for step in ((step2_controller,) if with_controller else ()) + (step3_lyapunov,):
            outcome = step(problem, funnel, certificates, settings, k)
            if outcome is None:
                stopped = True
                break
            funnel, certificates = outcome
        previous, current = history[-1], funnel.integral()
        if current != previous or not stopped:
            history.append(current)
            rounds = k
            bus.emit(EventType.ROUND_COMPLETED, round=k, integral=current)
            logger.info("round %d: integral of r %.6g", k, current)
        if stopped:
            break
        if current - previous <= settings.convergence * max(abs(previous), 1e-12):
            converged = True
            break
    bus.emit(EventType.SYNTHESIS_FINISHED, rounds=rounds, converged=converged, integral=history[-1])
    return SynthesisResult(funnel, certificates, tuple(history), rounds, converged)


def synthesize(problem: SynthesisProblem, settings: SynthesisSettings) -> SynthesisResult:
    """
    Certify a funnel and an output-feedback controller.

    Round 0 takes V = V0 (P = 0), the TVLQR law restricted to the measured
    coordinates and the largest certifiable exponential level profile. Rounds
    run steps 1-3 until the relative gain in the integral of r drops below
    ``settings.convergence`` or ``settings.max_rounds`` is reached. A failing
    step keeps the last certified iterate.

    Raises:
        NotCertifiedError: If round 0 cannot be certified
    """
    get_event_bus().emit(EventType.SYNTHESIS_STARTED, mode="synthesize", samples=len(problem.times))
    funnel, certificates = initial_levels(problem, settings)
    return _alternate(problem, funnel, certificates, settings, with_controller=True)


def verify_fixed_controller(problem: SynthesisProblem, settings: SynthesisSettings,
                            full_state: bool = False,
                            controller: Optional[np.ndarray] = None) -> SynthesisResult:
    """
    Largest funnel certified for a fixed controller (steps 1 and 3 only).

    Args:
        problem: Synthesis problem
        settings: Synthesis settings
        full_state: Verify the unrestricted TVLQR law over every coordinate
        controller: Fixed ``[k0, gains...]`` rows; defaults to the TVLQR law

    Raises:
        NotCertifiedError: If no initial level profile is certified
    """
    if full_state:
        problem = replace(problem, output_indices=tuple(range(problem.n_states)))
    get_event_bus().emit(EventType.SYNTHESIS_STARTED, mode="verify", samples=len(problem.times))
    funnel, certificates = initial_levels(problem, settings, controller)
    return _alternate(problem, funnel, certificates, settings, with_controller=False)
