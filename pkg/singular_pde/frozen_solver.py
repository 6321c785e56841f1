"""
Frozen auxiliary problems and the discrete direct method that solves them.

A frozen problem fixes the gradient argument of the reaction (scalar case) or
every argument but the unknown's own potential term (system case), which
restores a variational structure: solutions are minimizers of
operators.frozen_energy, found by damped Newton with Armijo backtracking.
"""
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .config.settings import (
    ARMIJO_C1, ENERGY_SLACK, MAX_BACKTRACKS, MAX_NEWTON, MAX_STEP_FACTOR,
    REGULARIZATION_LADDER, SOLVE_COLUMNS, TOL_CMP_FACTOR, TOL_SOLVER,
)
from .errors import (
    BracketViolation, LineSearchStall, MaxItersExceeded, NonFiniteEnergy, SingularDomain,
)
from .grid import discrete_gradient
from .operators import energy_gradient, energy_hessian, free_mask, frozen_energy
from .reactions import (
    evaluate_terms, term_frozen_factor, term_s_integral, term_s_slope, term_s_value,
)

logger = logging.getLogger(__name__)


class FrozenRHS:
    """
    Right-hand side r(x, s) of a frozen problem, truncated against a bracket.

    The s-dependent part is a list of reaction terms with their frozen
    factors (coefficient, field, frozen gradients) cached per node; `source`
    collects everything that no longer depends on s. Below the bracket floor
    (and above its ceiling, when there is one) r is held at its value on the
    bracket, and H(x, ·) is continued linearly so that the energy stays
    finite for every real s.
    """

    def __init__(self, grid, terms=(), factors=(), source=None, lower=None, upper=None,
                 active=None, boundary_load=None):
        self.grid = grid
        self.terms = tuple(terms)
        self.factors = tuple(np.asarray(f, dtype=float) for f in factors)
        self.source = np.zeros(grid.n_nodes) if source is None else np.asarray(source, dtype=float)
        self.lower = None if lower is None else np.asarray(lower, dtype=float)
        self.upper = None if upper is None else np.asarray(upper, dtype=float)
        self.active = np.ones(grid.n_nodes, dtype=bool) if active is None else np.asarray(active)
        self.boundary_load = boundary_load

    # -- builders ---------------------------------------------------------------

    @classmethod
    def scalar(cls, problem, w, bracket=None):
        """r(x, s) = h(x, T(s), ∇w(x)) (+ manufactured forcing) for the scalar problem."""
        grid = problem.grid
        if bracket is None and any(t.s_exp < 0 for t in problem.reaction.terms):
            raise SingularDomain('a singular reaction needs a bracket to be truncated against')
        xi = discrete_gradient(w)
        terms = problem.reaction.terms
        factors = [term_frozen_factor(t, grid.coords, None, xi, None) for t in terms]
        return cls(
            grid, terms, factors,
            source=problem.source,
            lower=None if bracket is None else bracket.sub.values,
            upper=None if bracket is None or bracket.super is None else bracket.super.values,
            active=free_mask(grid, problem.operator),
            boundary_load=problem.boundary_load,
        )

    @classmethod
    def system(cls, problem, component, z, w):
        """
        f(x, z1, z2, ∇w1, ∇w2) + z1^(p-1) for component 'f', or
        g(x, z1, z2, ∇w1, ∇w2) + z2^(q-1) for component 'g'.
        """
        grid = problem.grid
        for zi in z:
            if not np.all(zi.values > 0):
                raise SingularDomain(f'frozen values must be positive, min {zi.values.min():g}')
        xi1, xi2 = discrete_gradient(w[0]), discrete_gradient(w[1])
        own, spec = (z[0], problem.operator) if component == 'f' else (z[1], problem.operator_q)
        source = evaluate_terms(problem.reaction.component(component), grid.coords,
                                z[0].values, z[1].values, xi1, xi2)
        source = source + own.values ** (spec.p - 1)
        return cls(grid, source=source)

    def scaled(self, factor):
        load = None if self.boundary_load is None else factor * self.boundary_load
        return FrozenRHS(self.grid, self.terms, [factor * f for f in self.factors],
                         factor * self.source, self.lower, self.upper, self.active, load)

    # -- evaluation ---------------------------------------------------------------

    def clamp(self, s):
        s = np.asarray(s, dtype=float)
        if self.lower is not None:
            s = np.maximum(s, self.lower)
        if self.upper is not None:
            s = np.minimum(s, self.upper)
        return s

    def _sum(self, per_term, s):
        idx = np.flatnonzero(self.active)
        out = np.zeros(self.grid.n_nodes)
        for term, factor in zip(self.terms, self.factors):
            out[idx] += factor[idx] * per_term(term, s[idx])
        return out

    def values(self, s):
        out = self._sum(term_s_value, self.clamp(s)) + self.source
        out[~self.active] = 0.0
        return out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        inside = np.ones(s.shape, dtype=bool)
        if self.lower is not None:
            inside &= s > self.lower
        if self.upper is not None:
            inside &= s < self.upper
        out = self._sum(term_s_slope, self.clamp(s))
        out[~(inside & self.active)] = 0.0
        return out

    def antiderivative(self, s):
        s = np.asarray(s, dtype=float)
        t = self.clamp(s)
        base = np.zeros_like(s) if self.lower is None else self.lower
        idx = np.flatnonzero(self.active)
        out = np.zeros(self.grid.n_nodes)
        for term, factor in zip(self.terms, self.factors):
            out[idx] += factor[idx] * term_s_integral(term, base[idx], t[idx])
        if self.lower is not None:
            out += self._sum(term_s_value, self.lower) * np.minimum(s - self.lower, 0.0)
        if self.upper is not None:
            out += self._sum(term_s_value, self.upper) * np.maximum(s - self.upper, 0.0)
        out += self.source * s
        out[~self.active] = 0.0
        return out

    def sup(self, s):
        """max |r(x, s(x))| over active nodes (the rhs_sup of gradient estimates)."""
        values = self.values(s)[self.active]
        return float(np.max(np.abs(values))) if values.size else 0.0


@dataclass
class SolveReport:
    solution: object
    residual: float
    energies: list = field(default_factory=list)
    iterations: int = 0
    status: str = 'converged'
    backtracks: int = 0
    regularized_steps: int = 0
    comparison_min: float = None
    comparison_ok: bool = None
    component: str = 'u'

    @property
    def converged(self):
        return self.status == 'converged'

    @property
    def energy(self):
        return self.energies[-1] if self.energies else None

    @property
    def grad_sup(self):
        return float(np.max(np.abs(discrete_gradient(self.solution))))

    def to_row(self):
        row = {
            'component': self.component,
            'iterations': self.iterations,
            'residual': self.residual,
            'energy': self.energy,
            'comparison_min': self.comparison_min,
            'comparison_ok': self.comparison_ok,
            'backtracks': self.backtracks,
            'regularized_steps': self.regularized_steps,
            'status': self.status,
        }
        return {key: row[key] for key in SOLVE_COLUMNS}


def _newton_direction(hess, grad, weights):
    """
    Solve (H + μ·scale·M) d = −g for the first μ on the ladder that yields a
    descent direction; M is the lumped mass. Falls back to −M⁻¹g.
    """
    scale = max(float(np.max(np.abs(hess.diagonal()) / weights)), 1.0)
    mass = sp.diags(weights)
    for level, mu in enumerate(REGULARIZATION_LADDER):
        matrix = (hess + (mu * scale) * mass) if mu else hess
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', MatrixRankWarning)
            try:
                direction = np.atleast_1d(spsolve(matrix.tocsc(), -grad))
            except RuntimeError:
                continue
        if np.all(np.isfinite(direction)) and grad @ direction < 0:
            return direction, level
    return -grad / weights, len(REGULARIZATION_LADDER)


def minimize_energy(J, gradJ, init, tol, hessJ, max_iters=MAX_NEWTON, free=None):
    """
    Damped Newton on gradJ with Armijo backtracking on J.

    Args:
        J: field -> energy
        gradJ: field -> DiscreteField (exact gradient of J)
        init: starting DiscreteField
        tol: stop when max |gradJ / node volume| over free nodes <= tol
        hessJ: field -> sparse Hessian
        max_iters: Newton iteration cap
        free: mask of nodes carrying unknowns (default: all)

    Returns:
        SolveReport with the energy of every accepted iterate.

    Raises:
        LineSearchStall, MaxItersExceeded (both carry the report so far).
    """
    grid = init.grid
    free = np.ones(grid.n_nodes, dtype=bool) if free is None else free
    weights = grid.volumes[free]
    free_idx = np.flatnonzero(free)
    u = np.array(init.values, dtype=float)
    energy = J(init)
    energies = [energy]
    backtracks = regularized = 0

    def report(iteration, residual, status):
        return SolveReport(init.with_values(u), residual, energies, iteration, status,
                           backtracks, regularized)

    def residual_of(values):
        grad = gradJ(init.with_values(values)).values[free]
        return grad, (float(np.max(np.abs(grad / weights))) if grad.size else 0.0)

    residual = np.inf
    for iteration in range(max_iters + 1):
        current = init.with_values(u)
        grad, residual = residual_of(u)
        if residual <= tol:
            logger.debug('newton converged: %d iterations, residual %.3e', iteration, residual)
            return report(iteration, residual, 'converged')
        if iteration == max_iters:
            break

        hess = hessJ(current).tocsr()[free_idx][:, free_idx]
        direction, level = _newton_direction(hess, grad, weights)
        if level:
            regularized += 1
        cap = MAX_STEP_FACTOR * (1.0 + float(np.max(np.abs(u))))
        longest = float(np.max(np.abs(direction)))
        if longest > cap:
            direction = direction * (cap / longest)
        slope = float(grad @ direction)

        step = 1.0
        slack = ENERGY_SLACK * (1.0 + abs(energy))
        for _ in range(MAX_BACKTRACKS):
            trial = u.copy()
            trial[free] += step * direction
            try:
                trial_energy = J(init.with_values(trial))
            except (NonFiniteEnergy, SingularDomain):
                trial_energy = np.inf
            if trial_energy <= energy + ARMIJO_C1 * step * slope:
                break
            # energy change below roundoff: the gradient residual has to drop instead
            if abs(trial_energy - energy) <= slack and residual_of(trial)[1] < residual:
                break
            step *= 0.5
            backtracks += 1
        else:
            raise LineSearchStall(
                f'no acceptable step after {MAX_BACKTRACKS} backtracks (residual {residual:.3e})',
                report=report(iteration, residual, 'stall'))

        u = trial
        energy = trial_energy
        energies.append(energy)
        logger.debug('newton %d: J=%.12e residual=%.3e step=%g reg=%d',
                     iteration, energy, residual, step, level)

    raise MaxItersExceeded(f'newton did not converge in {max_iters} iterations '
                           f'(residual {residual:.3e})',
                           report=report(max_iters, residual, 'max_iters'))


def _with_zero_trace(init, spec):
    free = free_mask(init.grid, spec)
    if free.all():
        return init
    return init.with_values(np.where(free, init.values, 0.0))


def solve_frozen_scalar(spec, rhs, bracket, init, tol=TOL_SOLVER, max_iters=MAX_NEWTON,
                        enforce_comparison=True):
    """
    Minimize the frozen energy and check the comparison witness u >= u_sub.

    Raises BracketViolation (carrying the report) when
    min(u - u_sub) < -TOL_CMP_FACTOR * |u_sub|_inf and `enforce_comparison` is set.
    """
    init = _with_zero_trace(init, spec)
    report = minimize_energy(
        lambda u: frozen_energy(u, rhs, spec),
        lambda u: energy_gradient(u, rhs, spec),
        init, tol,
        hessJ=lambda u: energy_hessian(u, rhs, spec),
        max_iters=max_iters,
        free=free_mask(init.grid, spec),
    )
    if bracket is not None:
        margin = float(np.min(report.solution.values - bracket.sub.values))
        tol_cmp = TOL_CMP_FACTOR * (bracket.sub.sup or 1.0)
        report.comparison_min = margin
        report.comparison_ok = margin >= -tol_cmp
        if not report.comparison_ok and enforce_comparison:
            report.status = 'bracket_violation'
            raise BracketViolation(
                f'solution falls below the subsolution by {-margin:.3e} (tolerance {tol_cmp:.1e})',
                report=report)
    return report


def solve_frozen_system(specs, rhs, brackets=None, inits=None, tol=TOL_SOLVER,
                        max_iters=MAX_NEWTON):
    """
    Solve both frozen components. Each right-hand side depends on frozen data
    only, so the two equations are independent minimizations.
    """
    reports = []
    for index, (spec, component_rhs, name) in enumerate(zip(specs, rhs, ('u', 'v'))):
        init = inits[index] if inits is not None else component_rhs.grid.constant(1.0)
        bracket = brackets[index] if brackets is not None else None
        report = solve_frozen_scalar(spec, component_rhs, bracket, init, tol, max_iters,
                                     enforce_comparison=False)
        reports.append(replace(report, component=name))
    return tuple(reports)
