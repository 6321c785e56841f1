"""
The unfreezing procedure: outer fixed-point iterations over frozen solves.

Scalar problems iterate w -> u = Ψ(w), where Ψ(w) is the frozen solve started
from the subsolution. Systems freeze both values and gradients, clamp the new
values into the bracket (the trapping projection) and monitor a gradient cap.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .config.settings import (
    CALIBRATION_SAFETY, DEDUP_DISTANCE, DEFAULT_SEED, GRADIENT_CAP, MAX_NEWTON, MAX_OUTER,
    N_STARTS, PROBE_SCALES, PROBE_SLACK, TOL_FP, TOL_RES_FACTOR, TOL_SOLVER, TRACE_COLUMNS,
    TRAPPING_PATIENCE,
)
from .errors import NoConvergence, SingularDomain, SolverError, TrappingExit
from .frozen_solver import FrozenRHS, solve_frozen_scalar, solve_frozen_system
from .grid import discrete_gradient
from .operators import energy_gradient, free_mask

logger = logging.getLogger(__name__)


@dataclass
class FixedPointTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    residual_ok: bool = None
    tol_res: float = None
    spurious: bool = False

    @property
    def iterations(self):
        return len(self.records)

    @property
    def final(self):
        return self.records[-1] if self.records else None

    @property
    def sup_distances(self):
        return [r['sup_distance'] for r in self.records]

    def contraction_ratios(self, last=5):
        """Ratios of successive sup-distances over the final `last` iterations."""
        d = self.sup_distances[-(last + 1):]
        return [b / a if a > 0 else 0.0 for a, b in zip(d, d[1:])]

    def to_rows(self):
        return [{key: r.get(key) for key in TRACE_COLUMNS} for r in self.records]


def c1_distance(u, w):
    """max(|u − w|_inf, |∇u − ∇w|_inf) with nodal gradients."""
    values = float(np.max(np.abs(u.values - w.values)))
    grads = float(np.max(np.abs(discrete_gradient(u) - discrete_gradient(w))))
    return max(values, grads)


def unfrozen_residual(problem, u, bracket=None):
    """Mass-normalized residual of the original scalar problem at u, and sup |h| there."""
    rhs = FrozenRHS.scalar(problem, u, bracket)
    residual = energy_gradient(u, rhs, problem.operator).values / problem.grid.volumes
    residual = residual[free_mask(problem.grid, problem.operator)]
    return float(np.max(np.abs(residual))), rhs.sup(u.values)


def _scalar_record(iteration, problem, bracket, u, w, C_cal):
    residual, rhs_sup = unfrozen_residual(problem, u, bracket)
    grad_sup = float(np.max(np.abs(discrete_gradient(u))))
    margin_grad = None
    if C_cal is not None:
        margin_grad = C_cal * rhs_sup ** (1.0 / (problem.operator.p - 1)) - grad_sup
    return {
        'iteration': iteration,
        'sup_distance': float(np.max(np.abs(u.values - w.values))),
        'c1_distance': c1_distance(u, w),
        'unfrozen_residual': residual,
        'rhs_sup': rhs_sup,
        'grad_sup': grad_sup,
        'margin_sub': None if bracket is None else float(np.min(u.values - bracket.sub.values)),
        'margin_super': (None if bracket is None or bracket.super is None
                         else float(np.min(bracket.super.values - u.values))),
        'margin_grad': margin_grad,
        'clamp_active': False,
    }


def _finish(trace, tol_res_scale, what):
    final = trace.final
    trace.tol_res = TOL_RES_FACTOR * (1.0 + final[tol_res_scale])
    trace.residual_ok = final['unfrozen_residual'] <= trace.tol_res
    if not trace.residual_ok:
        raise NoConvergence(
            f'{what} reached a fixed point but its unfrozen residual '
            f'{final["unfrozen_residual"]:.3e} exceeds {trace.tol_res:.3e}', trace=trace)


def iterate_scalar(problem, bracket, w0=None, tol_fp=TOL_FP, max_outer=MAX_OUTER,
                   tol=TOL_SOLVER, C_cal=None, max_newton=MAX_NEWTON):
    """
    Picard loop w_{k+1} = Ψ(w_k) until the discrete C¹ distance is <= tol_fp.

    Every frozen solve starts from the subsolution (from w when there is no
    bracket), so a reaction without gradient dependence is reproduced bit for
    bit on the second iteration.

    Returns:
        (solution, FixedPointTrace)

    Raises:
        NoConvergence after max_outer iterations or when the unfrozen residual
        of the limit exceeds tol_res; frozen-solver errors carry the trace.
    """
    grid = problem.grid
    if w0 is not None:
        w = w0
    else:
        w = bracket.sub if bracket is not None else grid.constant(1.0)
    trace = FixedPointTrace()
    u = w
    try:
        for iteration in range(1, max_outer + 1):
            rhs = FrozenRHS.scalar(problem, w, bracket)
            init = bracket.sub if bracket is not None else w
            report = solve_frozen_scalar(problem.operator, rhs, bracket, init, tol, max_newton)
            u = report.solution
            record = _scalar_record(iteration, problem, bracket, u, w, C_cal)
            trace.records.append(record)
            logger.debug('outer %d: sup %.3e c1 %.3e residual %.3e newton %d', iteration,
                         record['sup_distance'], record['c1_distance'],
                         record['unfrozen_residual'], report.iterations)
            if record['c1_distance'] <= tol_fp:
                trace.converged = True
                break
            w = u
    except SolverError as exc:
        exc.trace = trace
        raise
    if not trace.converged:
        raise NoConvergence(f'no fixed point within {max_outer} outer iterations '
                            f'(last C1 distance {trace.final["c1_distance"]:.3e})', trace=trace)
    _finish(trace, 'rhs_sup', 'scalar iteration')
    logger.info('scalar fixed point after %d outer iterations (residual %.3e)',
                trace.iterations, trace.final['unfrozen_residual'])
    return u, trace


# -----------------------------------------------------------------------------
# Systems
# -----------------------------------------------------------------------------

def system_residual(problem, u, v):
    """Unfrozen residual of the Neumann system at (u, v), and sup of its right-hand sides."""
    worst, scale = 0.0, 0.0
    for component, field_, spec in (('f', u, problem.operator), ('g', v, problem.operator_q)):
        try:
            rhs = FrozenRHS.system(problem, component, (u, v), (u, v))
        except SingularDomain:
            return np.inf, np.inf
        residual = energy_gradient(field_, rhs, spec).values / problem.grid.volumes
        worst = max(worst, float(np.max(np.abs(residual))))
        scale = max(scale, rhs.sup(field_.values))
    return worst, scale


def iterate_system(problem, brackets, z0=None, w0=None, tol_fp=TOL_FP, max_outer=MAX_OUTER,
                   M=GRADIENT_CAP, tol=TOL_SOLVER, max_newton=MAX_NEWTON):
    """
    Two-level unfreezing for the Neumann system.

    Each outer step solves both frozen components at (z, w), then sets
    w <- (u, v) and z <- (u, v) clamped into the brackets. The gradient cap M
    may be exceeded for at most TRAPPING_PATIENCE - 1 consecutive iterates.

    Returns:
        ((u, v), FixedPointTrace)
    """
    if not M > 0:
        raise ValueError('gradient cap M must be positive')
    z = tuple(z0) if z0 is not None else tuple(b.sub for b in brackets)
    w = tuple(w0) if w0 is not None else z
    trace = FixedPointTrace()
    exceeded = 0
    solution = w
    try:
        for iteration in range(1, max_outer + 1):
            rhs = (FrozenRHS.system(problem, 'f', z, w), FrozenRHS.system(problem, 'g', z, w))
            reports = solve_frozen_system(problem.operators, rhs, brackets, inits=w, tol=tol,
                                          max_iters=max_newton)
            solution = tuple(r.solution for r in reports)
            clamped = tuple(s.with_values(b.clamp(s.values)) for s, b in zip(solution, brackets))
            clamp_active = any(np.any(c.values != s.values) for c, s in zip(clamped, solution))

            residual, rhs_sup = system_residual(problem, *solution)
            grad_sup = max(float(np.max(np.abs(discrete_gradient(s)))) for s in solution)
            record = {
                'iteration': iteration,
                'sup_distance': max(float(np.max(np.abs(s.values - p.values)))
                                    for s, p in zip(solution, w)),
                'c1_distance': max(c1_distance(s, p) for s, p in zip(solution, w)),
                'unfrozen_residual': residual,
                'rhs_sup': rhs_sup,
                'grad_sup': grad_sup,
                'margin_sub': min(float(np.min(s.values - b.sub.values))
                                  for s, b in zip(solution, brackets)),
                'margin_super': min(float(np.min(b.super.values - s.values))
                                    for s, b in zip(solution, brackets)),
                'margin_grad': M - grad_sup,
                'clamp_active': bool(clamp_active),
            }
            trace.records.append(record)
            logger.debug('outer %d: c1 %.3e residual %.3e clamp %s', iteration,
                         record['c1_distance'], residual, clamp_active)

            exceeded = exceeded + 1 if record['margin_grad'] < 0 else 0
            if exceeded >= TRAPPING_PATIENCE:
                raise TrappingExit(
                    f'gradient cap {M:g} exceeded for {exceeded} consecutive iterates '
                    f'(|grad|_inf = {grad_sup:.3e})', trace=trace)
            if record['c1_distance'] <= tol_fp:
                trace.converged = True
                break
            z, w = clamped, solution
    except SolverError as exc:
        exc.trace = trace
        raise
    if not trace.converged:
        raise NoConvergence(f'system did not converge within {max_outer} outer iterations '
                            f'(last C1 distance {trace.final["c1_distance"]:.3e})', trace=trace)
    trace.spurious = any(r['clamp_active'] for r in trace.records[-2:])
    if trace.spurious:
        logger.warning('clamping active at convergence; the fixed point may be spurious')
    _finish(trace, 'rhs_sup', 'system iteration')
    return solution, trace


# -----------------------------------------------------------------------------
# Gradient estimates and minimal selection
# -----------------------------------------------------------------------------

def calibrate_gradient_constant(problem, tol=TOL_SOLVER):
    """
    C_cal from a pilot solve without singular terms: the same operator and
    boundary condition with forcing 1 (1 + x under Neumann conditions).
    """
    grid, spec = problem.grid, problem.operator
    if spec.bc == 'neumann' and spec.lam == 0:
        raise ValueError('calibration under Neumann conditions needs lambda > 0')
    source = np.ones(grid.n_nodes)
    if spec.bc == 'neumann':
        source = source + grid.coords[:, 0] - grid.coords[0, 0]
    rhs = FrozenRHS(grid, source=source, active=free_mask(grid, spec))
    pilot = solve_frozen_scalar(spec, rhs, None, grid.constant(1.0), tol)
    rhs_sup = rhs.sup(pilot.solution.values)
    c_cal = CALIBRATION_SAFETY * pilot.grad_sup / rhs_sup ** (1.0 / (spec.p - 1))
    logger.info('calibrated gradient constant C_cal=%.4g', c_cal)
    return c_cal


def gradient_bound_check(report, rhs_sup, spec, C_cal, rhs=None, bracket=None,
                         scales=PROBE_SCALES, tol=TOL_SOLVER):
    """
    margin = C_cal·rhs_sup^(1/(p-1)) − |∇u|_inf, plus the scaling probe when
    the frozen right-hand side is given: re-solve with rhs scaled by t and
    require |∇u_t| <= PROBE_SLACK·t^(1/(p-1))·|∇u_1|.
    """
    grad = report.grad_sup
    bound = C_cal * rhs_sup ** (1.0 / (spec.p - 1))
    probes = []
    if rhs is not None:
        for t in scales:
            scaled = solve_frozen_scalar(spec, rhs.scaled(t), bracket, report.solution, tol,
                                         enforce_comparison=False)
            if grad > 0:
                ratio = scaled.grad_sup / grad
            else:
                ratio = 0.0 if scaled.grad_sup == 0 else np.inf
            limit = PROBE_SLACK * t ** (1.0 / (spec.p - 1))
            exponent = np.log(ratio) / np.log(t) if ratio > 0 else 0.0
            probes.append({'t': t, 'ratio': float(ratio), 'limit': limit,
                           'exponent': float(exponent), 'ok': bool(ratio <= limit)})
    margin = bound - grad
    return {
        'margin': float(margin),
        'bound': float(bound),
        'grad_sup': grad,
        'probes': probes,
        'ok': bool(margin >= 0 and all(p['ok'] for p in probes)),
    }


def minimal_selection_probe(problem, bracket, w, n_starts=N_STARTS, seed=DEFAULT_SEED,
                            tol=TOL_SOLVER):
    """
    Approximate min S(w) by solving the frozen problem from several starts
    (u_sub, u_sub + 1, then seeded random fields in the bracket) and keeping
    the nodewise-smallest distinct solution.
    """
    grid = problem.grid
    rhs = FrozenRHS.scalar(problem, w, bracket)
    sub = bracket.sub.values
    rng = np.random.default_rng(seed)
    starts = [sub, sub + 1.0]
    while len(starts) < n_starts:
        width = (bracket.super.values - sub) if bracket.super is not None else 2.0
        starts.append(sub + rng.uniform(0.0, 1.0, grid.n_nodes) * width)

    candidates, reports = [], []
    for start in starts[:n_starts]:
        report = solve_frozen_scalar(problem.operator, rhs, bracket, grid.field(start), tol)
        reports.append(report)
        u = report.solution
        if all(np.max(np.abs(u.values - c.values)) > DEDUP_DISTANCE for c in candidates):
            candidates.append(u)

    minimal = None
    for c in candidates:
        if all(np.all(c.values <= o.values + DEDUP_DISTANCE) for o in candidates):
            minimal = c
            break
    incomparable = minimal is None
    if incomparable:
        logger.warning('frozen solutions are incomparable; returning the smallest in mean')
        minimal = min(candidates, key=lambda c: float(grid.volumes @ c.values))
    return {
        'candidates': candidates,
        'min_candidate': minimal,
        'incomparable': incomparable,
        'reports': reports,
    }
