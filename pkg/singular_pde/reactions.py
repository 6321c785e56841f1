"""
Reaction terms h = f + g (scalar) and (f, g) (systems) as closed-form term lists,
plus sampling certificates for the structural hypotheses on the singular part.

Each term is a monomial

    coefficient * a(x) * m(s or t) * (s + shift)^s_exp * (t + shift)^t_exp * |ξ1|^xi1_exp * |ξ2|^xi2_exp

where a(x) >= 0 is a sympy expression and m is an optional sin/cos modulator.
Terms declared `singular` form the singular part g of a scalar split; every
other term belongs to the convective part f, which is extended by zero for
negative s so that it is defined on the whole real line.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .config.settings import (
    GAUSS_LEGENDRE_POINTS, GRAD_FLOOR, LOG_SAMPLE_RANGE, LOG_SAMPLES, MONOTONE_TOL,
)
from .errors import SingularDomain
from .utils.expressions import compile_field

logger = logging.getLogger(__name__)

TERM_KINDS = ['singular', 'growth', 'convective', 'source']
MODULATORS = ['none', 'sin_s', 'cos_s', 'sin_t', 'cos_t']
COMPONENTS = {'scalar': ('h',), 'system': ('f', 'g')}
CHAIN_PARAMETERS = ['alpha1', 'beta1', 'gamma1', 'delta1', 'alpha2', 'beta2', 'gamma2', 'delta2']


@dataclass(frozen=True)
class ReactionTerm:
    kind: str
    coefficient: float = 1.0
    field: str = '1'
    s_exp: float = 0.0
    t_exp: float = 0.0
    xi1_exp: float = 0.0
    xi2_exp: float = 0.0
    modulator: str = 'none'
    frequency: float = 1.0
    shift: float = 0.0
    component: str = 'h'

    @property
    def depends_on_gradient(self):
        return self.xi1_exp != 0 or self.xi2_exp != 0

    @property
    def s_modulated(self):
        return self.modulator in ('sin_s', 'cos_s')

    def to_record(self):
        return {
            'kind': self.kind, 'coefficient': self.coefficient, 'field': self.field,
            's_exp': self.s_exp, 't_exp': self.t_exp, 'xi1_exp': self.xi1_exp,
            'xi2_exp': self.xi2_exp, 'modulator': self.modulator,
            'frequency': self.frequency, 'shift': self.shift, 'component': self.component,
        }


@dataclass(frozen=True)
class SingularMetadata:
    monotone_decreasing: bool = True
    singular_limit: bool = True
    growth_C: float = 1.0
    growth_gamma: float = 0.5


@dataclass(frozen=True)
class ReactionSpec:
    arity: str
    terms: tuple
    parameters: dict = field(default_factory=dict, hash=False, compare=True)
    metadata: SingularMetadata = None

    def __post_init__(self):
        object.__setattr__(self, 'terms', tuple(self.terms))
        problems = reaction_violations(self)
        if problems:
            raise ValueError('; '.join(problems))

    def component(self, name):
        return tuple(t for t in self.terms if t.component == name)

    @property
    def singular_part(self):
        return tuple(t for t in self.terms if t.kind == 'singular')

    @property
    def convective_part(self):
        return tuple(t for t in self.terms if t.kind != 'singular')

    @property
    def has_singular_terms(self):
        return any(_is_singular(t) for t in self.terms)

    @property
    def depends_on_gradient(self):
        return any(t.depends_on_gradient for t in self.terms)

    def scaled(self, factor):
        return replace(self, terms=tuple(replace(t, coefficient=t.coefficient * factor)
                                         for t in self.terms))

    def to_records(self):
        return [t.to_record() for t in self.terms]


def _is_singular(term):
    return term.s_exp < 0 or term.t_exp < 0


def reaction_violations(spec):
    """Every violated ReactionSpec invariant, as messages."""
    problems = []
    if spec.arity not in COMPONENTS:
        return [f'arity must be scalar or system, got {spec.arity!r}']
    allowed = COMPONENTS[spec.arity]
    for i, term in enumerate(spec.terms):
        label = f'term {i} ({term.kind})'
        if term.kind not in TERM_KINDS:
            problems.append(f'{label}: kind must be one of {TERM_KINDS}')
        if term.modulator not in MODULATORS:
            problems.append(f'{label}: modulator must be one of {MODULATORS}')
        if term.component not in allowed:
            problems.append(f'{label}: component must be one of {list(allowed)} for {spec.arity} reactions')
        if term.shift < 0:
            problems.append(f'{label}: shift must be nonnegative')
        if min(term.xi1_exp, term.xi2_exp) < 0:
            problems.append(f'{label}: gradient exponents must be nonnegative')
        if spec.arity == 'scalar':
            if term.kind == 'singular' and term.depends_on_gradient:
                problems.append(f'{label}: the singular part must not depend on the gradient')
            if term.kind != 'singular' and term.s_exp < 0:
                problems.append(f'{label}: the convective part must be evaluable at s = 0')
            if term.t_exp != 0 or term.modulator in ('sin_t', 'cos_t') or term.xi2_exp != 0:
                problems.append(f'{label}: scalar reactions have no second component')
    for name, value in spec.parameters.items():
        if not value > 0:
            problems.append(f'parameter {name} must be positive')
    meta = spec.metadata
    if meta is not None:
        if not meta.growth_C > 0:
            problems.append('growth C must be positive')
        if not 0 < meta.growth_gamma < 1:
            problems.append('growth gamma must lie in (0, 1) (growth bound g <= C s^-gamma)')
        if any(_is_singular(t) for t in spec.singular_part) and not meta.singular_limit:
            problems.append('a term s^-eta requires singular_limit = true')
    return problems


# -----------------------------------------------------------------------------
# Evaluation
# -----------------------------------------------------------------------------

def _power(base, exponent):
    """base^exponent; nonsingular powers are extended by zero below 0."""
    if exponent == 0:
        return np.ones_like(base, dtype=float)
    if exponent > 0:
        return np.maximum(base, 0.0) ** exponent
    return base ** exponent


def _power_slope(base, exponent):
    if exponent == 0:
        return np.zeros_like(base, dtype=float)
    if exponent > 0:
        positive = base > 0
        safe = np.where(positive, base, 1.0)
        return np.where(positive, exponent * safe ** (exponent - 1), 0.0)
    return exponent * base ** (exponent - 1)


def _modulator(term, s, t):
    w = term.frequency
    if term.modulator == 'sin_s':
        return np.sin(w * s)
    if term.modulator == 'cos_s':
        return np.cos(w * s)
    if term.modulator == 'sin_t':
        return np.sin(w * t)
    if term.modulator == 'cos_t':
        return np.cos(w * t)
    return np.ones_like(s, dtype=float)


def _gradient_power(xi, exponent):
    if exponent == 0:
        return 1.0
    norm = np.linalg.norm(np.atleast_2d(xi), axis=-1)
    norm = np.where(norm < GRAD_FLOOR, 0.0, norm)
    return norm ** exponent


def term_frozen_factor(term, coords, t=None, xi1=None, xi2=None):
    """The part of a term that does not depend on s: coefficient * a(x) * t-factors * |ξ|-factors."""
    coords = np.atleast_2d(coords)
    factor = term.coefficient * compile_field(term.field)(coords)
    if term.t_exp != 0:
        factor = factor * _power(np.asarray(t, dtype=float) + term.shift, term.t_exp)
    if term.modulator in ('sin_t', 'cos_t'):
        factor = factor * _modulator(term, None, np.asarray(t, dtype=float))
    if term.xi1_exp != 0:
        factor = factor * _gradient_power(xi1, term.xi1_exp)
    if term.xi2_exp != 0:
        factor = factor * _gradient_power(xi2, term.xi2_exp)
    return factor


def term_s_value(term, s):
    s = np.asarray(s, dtype=float)
    value = _power(s + term.shift, term.s_exp)
    if term.s_modulated:
        value = value * _modulator(term, s, None)
    return value


def term_s_slope(term, s):
    s = np.asarray(s, dtype=float)
    slope = _power_slope(s + term.shift, term.s_exp)
    if term.s_modulated:
        w = term.frequency
        mod = _modulator(term, s, None)
        dmod = w * np.cos(w * s) if term.modulator == 'sin_s' else -w * np.sin(w * s)
        slope = slope * mod + _power(s + term.shift, term.s_exp) * dmod
    return slope


def _gauss_legendre_integral(term, lower, upper):
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_LEGENDRE_POINTS)
    half = (upper - lower) / 2.0
    mid = (upper + lower) / 2.0
    taus = mid[:, None] + half[:, None] * nodes[None, :]
    return half * (term_s_value(term, taus) @ weights)


def term_s_integral(term, lower, upper):
    """∫_lower^upper of the s-dependent factor, exact where a closed form exists."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    e, c = term.s_exp, term.shift
    if term.s_modulated:
        if e != 0:
            return _gauss_legendre_integral(term, lower, upper)
        w = term.frequency
        if term.modulator == 'sin_s':
            return (np.cos(w * lower) - np.cos(w * upper)) / w
        return (np.sin(w * upper) - np.sin(w * lower)) / w
    if e == 0:
        return upper - lower
    if e == -1:
        return np.log((upper + c) / (lower + c))
    if e > 0:
        return (np.maximum(upper + c, 0.0) ** (e + 1) - np.maximum(lower + c, 0.0) ** (e + 1)) / (e + 1)
    return ((upper + c) ** (e + 1) - (lower + c) ** (e + 1)) / (e + 1)


def _check_domain(spec, s, t=None):
    for term in spec.terms:
        if term.s_exp < 0 and np.any(np.asarray(s) + term.shift <= 0):
            raise SingularDomain(f'singular term evaluated at s + shift <= 0 (s={np.min(s):g})')
        if term.t_exp < 0 and t is not None and np.any(np.asarray(t) + term.shift <= 0):
            raise SingularDomain(f'singular term evaluated at t + shift <= 0 (t={np.min(t):g})')
    shifts = [t_.shift for t_ in spec.terms if _is_singular(t_)]
    floor = -min(shifts) if shifts else 0.0
    if np.any(np.asarray(s) <= floor):
        raise SingularDomain(f'reaction evaluated at s={np.min(s):g}; truncate first')
    if spec.arity == 'system' and t is not None and np.any(np.asarray(t) <= floor):
        raise SingularDomain(f'reaction evaluated at t={np.min(t):g}; truncate first')


def evaluate_terms(terms, coords, s, t=None, xi1=None, xi2=None):
    """Vectorized sum of terms at nodes `coords` with nodal s, t, ξ1, ξ2."""
    coords = np.atleast_2d(coords)
    total = np.zeros(coords.shape[0])
    for term in terms:
        total = total + term_frozen_factor(term, coords, t, xi1, xi2) * term_s_value(term, s)
    return total


def eval_reaction(spec, x, s, t=None, xi1=None, xi2=None):
    """
    Evaluate h(x, s, ξ) for scalar specs or (f, g)(x, s, t, ξ1, ξ2) for systems
    at a single point. Raises SingularDomain for s <= 0 (t <= 0).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dim = x.shape[1]
    xi1 = np.zeros(dim) if xi1 is None else np.asarray(xi1, dtype=float)
    xi2 = np.zeros(dim) if xi2 is None else np.asarray(xi2, dtype=float)
    if spec.arity == 'system' and t is None:
        raise ValueError('system reactions need t')
    _check_domain(spec, s, t)
    s_arr, t_arr = np.array([float(s)]), None if t is None else np.array([float(t)])
    values = tuple(
        float(evaluate_terms(spec.component(name), x, s_arr, t_arr, xi1, xi2)[0])
        for name in COMPONENTS[spec.arity]
    )
    return values[0] if spec.arity == 'scalar' else values


def shift_reaction(spec, eps):
    """Replace g(x, s) by g(x, s + ε) in every singular term."""
    if not eps > 0:
        raise ValueError('shift must be positive')
    terms = tuple(replace(t, shift=eps) if t.kind == 'singular' or _is_singular(t) else t
                  for t in spec.terms)
    return replace(spec, terms=terms)


# -----------------------------------------------------------------------------
# Hypothesis certificates
# -----------------------------------------------------------------------------

def _singular_profile(spec, coords, s_values):
    """g(x, s) with ξ = 0 for every (node, s) pair, shape (n_nodes, n_s)."""
    coords = np.atleast_2d(coords)
    if spec.arity == 'scalar':
        terms = spec.singular_part
    else:
        terms = tuple(t for t in spec.terms if _is_singular(t))
    table = np.zeros((coords.shape[0], len(s_values)))
    zero = np.zeros(coords.shape[1])
    for k, s in enumerate(s_values):
        s_col = np.full(coords.shape[0], s)
        t_col = s_col if spec.arity == 'system' else None
        table[:, k] = evaluate_terms(terms, coords, s_col, t_col, zero, zero)
    return table


def sample_s_grid(count=LOG_SAMPLES, bounds=LOG_SAMPLE_RANGE):
    return np.geomspace(bounds[0], bounds[1], count)


def check_growth(spec, coords, C=None, gamma=None, s_samples=None):
    """
    Sampling certificate for g(x, s) <= C s^-γ on Ω × (0, 1).

    Returns {'ok', 'C', 'gamma', 'max_ratio', 'witnesses'}; witnesses list the
    violating samples (node index, s, g, bound).
    """
    meta = spec.metadata or SingularMetadata()
    C = meta.growth_C if C is None else C
    gamma = meta.growth_gamma if gamma is None else gamma
    s_values = sample_s_grid() if s_samples is None else np.asarray(s_samples)
    table = _singular_profile(spec, coords, s_values)
    scaled = table * s_values[None, :] ** gamma
    bad = np.argwhere(scaled > C * (1 + 1e-12))
    witnesses = [
        {'node': int(i), 's': float(s_values[k]), 'g': float(table[i, k]),
         'bound': float(C * s_values[k] ** -gamma)}
        for i, k in bad[:20]
    ]
    ok = bad.size == 0
    if not ok:
        logger.warning('growth bound C=%g gamma=%g violated at %d samples', C, gamma, len(bad))
    return {'ok': ok, 'C': C, 'gamma': gamma, 'max_ratio': float(scaled.max()), 'witnesses': witnesses}


def check_monotone_decreasing(spec, coords, s_samples=None):
    """Certificate for: g(x, ·) non-increasing on (0, 1] and g(·, 1) not identically 0."""
    s_values = sample_s_grid() if s_samples is None else np.sort(np.asarray(s_samples))
    table = _singular_profile(spec, coords, s_values)
    increments = np.diff(table, axis=1)
    bad = np.argwhere(increments > MONOTONE_TOL)
    witnesses = [{'node': int(i), 's': float(s_values[k]), 's_next': float(s_values[k + 1]),
                  'increase': float(increments[i, k])} for i, k in bad[:20]]
    at_one = _singular_profile(spec, coords, np.array([1.0]))[:, 0]
    nontrivial = bool(at_one.max() > 0)
    ok = bad.size == 0 and nontrivial
    if not ok:
        logger.warning('monotonicity certificate failed (increases=%d, g(.,1) nonzero=%s)',
                       len(bad), nontrivial)
    return {'ok': ok, 'monotone': bad.size == 0, 'nontrivial_at_one': nontrivial,
            'witnesses': witnesses}


def check_parameter_chain(spec, p, q):
    """max{γ1,δ1} < β1−α1 < p−1 and max{γ2,δ2} < α2−β2 < q−1, both strict."""
    prm = spec.parameters
    missing = [name for name in CHAIN_PARAMETERS if name not in prm]
    if missing:
        raise ValueError(f'parameter chain needs {", ".join(missing)}')
    first = max(prm['gamma1'], prm['delta1']) < prm['beta1'] - prm['alpha1'] < p - 1
    second = max(prm['gamma2'], prm['delta2']) < prm['alpha2'] - prm['beta2'] < q - 1
    if not (first and second):
        logger.warning('parameter chain fails (first=%s, second=%s)', first, second)
    return bool(first and second)


# -----------------------------------------------------------------------------
# Reaction families
# -----------------------------------------------------------------------------

def h_family(p, eta, coefficient='1', convection=1.0, growth=1.0):
    """h(x,s,ξ) = a(x) (s^-η + growth·s^(p-1) + convection·|ξ|^(p-1))."""
    terms = [ReactionTerm('singular', 1.0, coefficient, s_exp=-eta)]
    if growth:
        terms.append(ReactionTerm('growth', growth, coefficient, s_exp=p - 1))
    if convection:
        terms.append(ReactionTerm('convective', convection, coefficient, xi1_exp=p - 1))
    amplitude = _field_sup_hint(coefficient)
    meta = SingularMetadata(True, True, growth_C=amplitude, growth_gamma=eta if eta < 1 else 0.5)
    return ReactionSpec('scalar', terms, {'eta': eta}, meta)


def _field_sup_hint(text):
    try:
        return max(float(text), 1e-12)
    except ValueError:
        return 1.0


def fg_family(alpha1, beta1, gamma1, delta1, alpha2, beta2, gamma2, delta2):
    """
    f = sin(s) (s^-α1 t^β1 − |ξ1|^γ1 − |ξ2|^δ1)
    g = cos(t) (s^α2 t^-β2 − |ξ1|^γ2 − |ξ2|^δ2)
    """
    terms = [
        ReactionTerm('growth', 1.0, s_exp=-alpha1, t_exp=beta1, modulator='sin_s', component='f'),
        ReactionTerm('convective', -1.0, xi1_exp=gamma1, modulator='sin_s', component='f'),
        ReactionTerm('convective', -1.0, xi2_exp=delta1, modulator='sin_s', component='f'),
        ReactionTerm('growth', 1.0, s_exp=alpha2, t_exp=-beta2, modulator='cos_t', component='g'),
        ReactionTerm('convective', -1.0, xi1_exp=gamma2, modulator='cos_t', component='g'),
        ReactionTerm('convective', -1.0, xi2_exp=delta2, modulator='cos_t', component='g'),
    ]
    params = dict(alpha1=alpha1, beta1=beta1, gamma1=gamma1, delta1=delta1,
                  alpha2=alpha2, beta2=beta2, gamma2=gamma2, delta2=delta2)
    return ReactionSpec('system', terms, params, None)


def ladder_reaction(p=2.0, perturbation='0', amplitude=0.01, frequency=np.pi):
    """
    sin(πs) + amplitude·b(x) for a Neumann problem written with a unit
    potential: the absorbed s^(p-1) term is included so that
    −Δ_p u + u^(p-1) = r(x,u) reads −Δ_p u = sin(πu) + amplitude·b(x).
    """
    terms = [
        ReactionTerm('growth', 1.0, modulator='sin_s', frequency=frequency),
        ReactionTerm('growth', 1.0, s_exp=p - 1),
    ]
    if perturbation not in ('0', '') and amplitude:
        terms.append(ReactionTerm('source', amplitude, perturbation))
    return ReactionSpec('scalar', terms, {}, None)
