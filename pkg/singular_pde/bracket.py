"""
Sub- and supersolutions, the truncation operator and the Hardy–Sobolev
summability certificate.

Every bracket is accepted by a discrete residual check: the mass-normalized
energy gradient of the frozen problem at the candidate must be <= +tol_sub
nodewise for a subsolution (>= −tol_sub for a supersolution), with
tol_sub = TOL_SUB_FACTOR * (1 + sup |r|) at the bracket level.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .config.settings import (
    K_SHRINK_HALVINGS, LADDER_MAX_LEVEL, LADDER_STEP, LADDER_SIZE, SUPER_DOUBLINGS,
    TOL_SOLVER, TOL_SUB_FACTOR,
)
from .errors import BracketLadderFailed, BracketViolation, NonFiniteEnergy, NotASubsolution
from .frozen_solver import FrozenRHS, solve_frozen_scalar
from .grid import cell_gradient
from .operators import energy_gradient, free_mask
from .reactions import evaluate_terms

logger = logging.getLogger(__name__)

CONSTRUCTIONS = ['constant', 'distance_based', 'torsion', 'shifted']
SYSTEM_SAMPLES = 9


@dataclass(frozen=True, eq=False)
class Bracket:
    sub: object
    super: object = None
    construction: str = 'constant'
    parameters: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = self.sub.grid
        if self.construction != 'shifted':
            inside = self.sub.values[grid.interior_nodes]
            if inside.size and not np.all(inside > 0):
                raise ValueError('subsolution must be positive at interior nodes')
        if self.super is not None:
            gap = self.super.values - self.sub.values
            if np.any(gap < 0) or not np.any(gap > 0):
                raise ValueError('supersolution must lie above the subsolution, strictly somewhere')

    def clamp(self, values):
        values = np.maximum(values, self.sub.values)
        if self.super is not None:
            values = np.minimum(values, self.super.values)
        return values

    def to_record(self):
        return {'construction': self.construction, **self.parameters,
                'sub_min': float(self.sub.values.min()), 'sub_max': self.sub.sup,
                'super_max': None if self.super is None else self.super.sup}


def truncate(u, bracket):
    """T(u) = max(u, u_sub), capped at u_super when the bracket has one."""
    if u.grid is not bracket.sub.grid:
        raise ValueError('field and bracket live on different grids')
    return u.with_values(bracket.clamp(u.values))


# -----------------------------------------------------------------------------
# Residual checks
# -----------------------------------------------------------------------------

def _normalized_residual(problem, candidate, w=None, floor=True):
    """Strong-scale residual of the frozen problem at `candidate` and the matching tol_sub."""
    probe = Bracket(candidate, construction='shifted') if floor else None
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        try:
            rhs = FrozenRHS.scalar(problem, candidate if w is None else w, probe)
            residual = energy_gradient(candidate, rhs, problem.operator).values
            scale = rhs.sup(candidate.values)
        except NonFiniteEnergy:
            return np.full(problem.grid.n_nodes, np.inf), np.inf
    residual = residual / problem.grid.volumes
    residual[~free_mask(problem.grid, problem.operator)] = 0.0
    return residual, TOL_SUB_FACTOR * (1.0 + scale)


def check_subsolution(problem, candidate, w=None):
    """
    Certificate for: `candidate` is a discrete weak subsolution of the problem
    frozen at w (default: the candidate itself).
    """
    residual, tol = _normalized_residual(problem, candidate, w)
    node = int(np.argmax(residual))
    margin = float(residual[node])
    return {'ok': bool(margin <= tol), 'node': node, 'margin': margin, 'tol': tol}


def _reject(what, certificate):
    return NotASubsolution(
        f'{what} fails the residual check at node {certificate["node"]} '
        f'(residual {certificate["margin"]:.3e} > tol {certificate["tol"]:.1e})',
        node=certificate['node'], margin=certificate['margin'])


# -----------------------------------------------------------------------------
# Scalar brackets
# -----------------------------------------------------------------------------

def constant_subsolution(problem, c):
    """u_sub ≡ c for Neumann problems."""
    if problem.operator.bc != 'neumann':
        raise ValueError('constant subsolutions need a Neumann problem')
    if not c > 0:
        raise ValueError('subsolution level must be positive')
    sub = problem.grid.constant(c)
    certificate = check_subsolution(problem, sub)
    if not certificate['ok']:
        raise _reject(f'constant {c:g}', certificate)
    return Bracket(sub, None, 'constant', {'c': float(c)}, certificate)


def _shrink(problem, profile, k, construction, extra=None):
    level = float(k)
    for halving in range(K_SHRINK_HALVINGS + 1):
        sub = problem.grid.field(level * profile)
        certificate = check_subsolution(problem, sub)
        if certificate['ok']:
            logger.info('%s subsolution accepted with k=%g after %d halvings',
                        construction, level, halving)
            params = {'k': level, **(extra or {})}
            return Bracket(sub, None, construction, params, certificate)
        logger.debug('k=%g rejected (residual %.3e)', level, certificate['margin'])
        level /= 2.0
    raise _reject(f'{construction} subsolution after {K_SHRINK_HALVINGS} halvings', certificate)


def distance_subsolution(problem, k):
    """u_sub = k dist(x, ∂Ω), halving k until the residual check passes."""
    if problem.operator.bc not in ('dirichlet', 'robin'):
        raise ValueError('distance subsolutions need a Dirichlet or Robin problem')
    if not k > 0:
        raise ValueError('k must be positive')
    return _shrink(problem, problem.grid.distance, k, 'distance_based')


def torsion_function(problem, tol=TOL_SOLVER):
    """e solving −div a(∇e) + λ e^(p-1) = 1 with the problem's boundary condition."""
    spec = problem.operator
    if spec.bc == 'neumann' and spec.lam == 0:
        raise ValueError('the torsion problem needs lambda > 0 under Neumann conditions')
    grid = problem.grid
    rhs = FrozenRHS(grid, source=np.ones(grid.n_nodes), active=free_mask(grid, spec))
    return solve_frozen_scalar(spec, rhs, None, grid.constant(1.0), tol).solution


def torsion_subsolution(problem, k):
    """u_sub = k e with e the torsion function; positive up to a Robin boundary."""
    if not k > 0:
        raise ValueError('k must be positive')
    torsion = torsion_function(problem)
    return _shrink(problem, torsion.values, k, 'torsion', {'torsion_sup': torsion.sup})


def shifted_bracket(problem, eps):
    """Zero floor for the ε-shifted reaction (evaluable at s = 0)."""
    sub = problem.grid.constant(0.0)
    certificate = check_subsolution(problem, sub)
    if not certificate['ok']:
        raise _reject('zero floor of the shifted reaction', certificate)
    return Bracket(sub, None, 'shifted', {'eps': float(eps)}, certificate)


# -----------------------------------------------------------------------------
# Constant ladders (Neumann multiplicity)
# -----------------------------------------------------------------------------

def classify_constant(problem, level):
    """'sub', 'super' or None from the strict sign of the residual of u ≡ level."""
    residual, tol = _normalized_residual(problem, problem.grid.constant(level), floor=False)
    if np.max(residual) < -tol:
        return 'sub'
    if np.min(residual) > tol:
        return 'super'
    return None


def ladder_brackets(problem, size=LADDER_SIZE, step=LADDER_STEP, max_level=LADDER_MAX_LEVEL):
    """
    Ordered constant pairs u_sub_1 < u_super_1 < u_sub_2 < ... found by
    scanning levels step, 2·step, ... and alternating the sign requirement.
    """
    if problem.operator.bc != 'neumann':
        raise ValueError('constant ladders need a Neumann problem')
    grid = problem.grid
    pairs, lower, wanted = [], None, 'sub'
    index = 1
    while len(pairs) < size and index * step <= max_level:
        level = index * step
        kind = classify_constant(problem, level)
        if kind == wanted == 'sub':
            lower, wanted = level, 'super'
        elif kind == wanted == 'super':
            pairs.append((lower, level))
            logger.info('ladder pair %d: [%g, %g]', len(pairs), lower, level)
            wanted = 'sub'
        index += 1
    if len(pairs) < size:
        raise BracketLadderFailed(
            f'found {len(pairs)} of {size} ordered constant pairs below level {max_level:g}')
    return [
        Bracket(grid.constant(a), grid.constant(b), 'constant', {'c': a, 'M': b},
                {'ok': True})
        for a, b in pairs
    ]


# -----------------------------------------------------------------------------
# System brackets
# -----------------------------------------------------------------------------

def _component_sign(problem, component, level, other_range):
    """Signs of the constant-state reaction of one component over the other's range."""
    grid = problem.grid
    zero = np.zeros((grid.n_nodes, grid.dimension))
    terms = problem.reaction.component(component)
    own = np.full(grid.n_nodes, level)
    lo, hi = other_range
    values = []
    for other in np.linspace(lo, hi, SYSTEM_SAMPLES):
        other = np.full(grid.n_nodes, other)
        s, t = (own, other) if component == 'f' else (other, own)
        values.append(evaluate_terms(terms, grid.coords, s, t, zero, zero))
    values = np.concatenate(values)
    tol = TOL_SUB_FACTOR * (1.0 + np.max(np.abs(values)))
    return float(values.min()), float(values.max()), tol


def system_brackets(problem, subs):
    """
    Constant sub/super pairs for both components. A constant is a subsolution
    when its reaction is >= 0 for every value of the other component in that
    component's bracket, a supersolution when it is <= 0 there. Supersolutions
    are found by doubling from 1.
    """
    if problem.arity != 'system':
        raise ValueError('system brackets need a system problem')
    subs = [float(c) for c in subs]
    if min(subs) <= 0:
        raise ValueError('system subsolution levels must be positive')
    names = ('f', 'g')
    supers = [1.0, 1.0]

    def other_range(i):
        j = 1 - i
        return subs[j], max(supers[j], subs[j])

    for sweep in range(SUPER_DOUBLINGS):
        changed = False
        for i, name in enumerate(names):
            doublings = 0
            while True:
                _, high, tol = _component_sign(problem, name, supers[i], other_range(i))
                if supers[i] > subs[i] and high <= tol:
                    break
                supers[i] *= 2.0
                doublings += 1
                changed = True
                if doublings > SUPER_DOUBLINGS:
                    raise NotASubsolution(
                        f'no constant supersolution for {name} below {supers[i]:g}')
        if not changed:
            break

    brackets = []
    grid = problem.grid
    for i, name in enumerate(names):
        low, _, tol = _component_sign(problem, name, subs[i], other_range(i))
        if low < -tol:
            raise NotASubsolution(
                f'constant {subs[i]:g} is not a subsolution for {name} (reaction {low:.3e})',
                margin=-low)
        logger.info('%s bracket: [%g, %g]', name, subs[i], supers[i])
        brackets.append(Bracket(grid.constant(subs[i]), grid.constant(supers[i]), 'constant',
                                {'c': subs[i], 'M': supers[i]}, {'ok': True, 'margin': low}))
    return tuple(brackets)


# -----------------------------------------------------------------------------
# Hardy–Sobolev certificate
# -----------------------------------------------------------------------------

def hardy_sobolev_check(u, gamma, p, test_functions, k=None):
    """
    R(φ) = ∫ u^-γ |φ| / ∫ |∇φ|^p for each test function vanishing on ∂Ω.

    Args:
        u: field bounded below by k dist(x, ∂Ω)
        gamma: exponent in (0, 1)
        p: gradient exponent
        test_functions: DiscreteFields, zero on boundary nodes; zero fields are skipped
        k: when given, u >= k dist is verified nodewise first

    Returns:
        {'ratios', 'max_ratio', 'finite', 'skipped'}
    """
    grid = u.grid
    if k is not None:
        gap = u.values - k * grid.distance
        if np.min(gap) < -1e-12 * (1.0 + u.sup):
            node = int(np.argmin(gap))
            raise BracketViolation(f'u falls below {k:g}·dist at node {node}')
    inside = grid.interior_nodes
    ratios, skipped = [], []
    for index, phi in enumerate(test_functions):
        if np.any(phi.values[grid.boundary_nodes] != 0):
            raise ValueError(f'test function {index} does not vanish on the boundary')
        energy = grid.cell_measures @ np.linalg.norm(cell_gradient(grid, phi.values), axis=1) ** p
        if energy == 0:
            skipped.append(index)
            continue
        with np.errstate(divide='ignore'):
            weight = u.values[inside] ** -gamma
        ratios.append(float(grid.volumes[inside] @ (weight * np.abs(phi.values[inside])) / energy))
    finite = bool(ratios) and all(np.isfinite(ratios))
    return {
        'ratios': ratios,
        'max_ratio': max(ratios) if ratios else None,
        'finite': finite,
        'skipped': skipped,
    }
