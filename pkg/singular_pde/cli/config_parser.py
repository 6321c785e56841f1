"""
Run configs: INI files read with configparser and validated section by
section with WTForms, so that every problem in a config is reported at once.

A config looks like:

    [problem]
    extent = 0 1
    n_cells = 64
    bracket = torsion

    [operator]
    kind = r_laplacian
    p = 2
    lambda = 0
    beta = 1
    bc = robin

    [term:singular]
    kind = singular
    s_exp = -0.5

See FORMATS.md for every section and key.
"""
import configparser
import hashlib
import os
from dataclasses import dataclass, field, replace

from werkzeug.datastructures import MultiDict
from wtforms import Form, FloatField, IntegerField, StringField
from wtforms.validators import AnyOf, InputRequired, NumberRange, Optional, ValidationError

from ..config.settings import (
    BOUNDARY_KINDS, DEFAULT_SEED, EPS_SCHEDULE, GRADIENT_CAP, LADDER_SIZE, MAX_NEWTON,
    MAX_OUTER, N_STARTS, OPERATOR_KINDS, TOL_FP, TOL_SOLVER, UNIQUENESS_STARTS,
)
from ..errors import ConfigValidationError, ParseError
from ..experiments import EXPERIMENT_RUNNERS, ExperimentSpec
from ..operators import OperatorSpec, operator_violations
from ..problems import BRACKET_MODES, ProblemRecipe, SolverOptions
from ..reactions import (
    CHAIN_PARAMETERS, MODULATORS, TERM_KINDS, ReactionSpec, ReactionTerm, SingularMetadata,
    check_parameter_chain, fg_family, h_family, ladder_reaction,
)
from ..utils.expressions import parse_expression

FAMILIES = ['h', 'fg', 'ladder']
METHODS = ['truncation', 'shift']
BOOLEAN_WORDS = {'true': True, 'yes': True, '1': True, 'false': False, 'no': False, '0': False}

# INI keys that are not valid Python identifiers
KEY_ALIASES = {'lambda': 'lam'}


# =============================================================================
# VALIDATORS
# =============================================================================

class GreaterThan:
    """Strict lower bound."""

    def __init__(self, bound, message):
        self.bound = bound
        self.message = message

    def __call__(self, form, field):
        if field.data is not None and not field.data > self.bound:
            raise ValidationError(self.message)


class NumberList:
    """Whitespace-separated numbers, optionally with an allowed count."""

    def __init__(self, cast=float, counts=None, positive=False):
        self.cast = cast
        self.counts = counts
        self.positive = positive

    def __call__(self, form, field):
        try:
            values = _words(field.data, self.cast)
        except ValueError:
            raise ValidationError(f'expected whitespace-separated numbers, got {field.data!r}')
        if self.counts and len(values) not in self.counts:
            raise ValidationError(f'expected {" or ".join(map(str, self.counts))} numbers')
        if self.positive and any(v <= 0 for v in values):
            raise ValidationError('all entries must be positive')


def expression(form, field):
    try:
        parse_expression(field.data)
    except ValueError as exc:
        raise ValidationError(str(exc))


def boolean_word(form, field):
    if field.data.lower() not in BOOLEAN_WORDS:
        raise ValidationError('expected true or false')


def _choice(values, what):
    return AnyOf(values, message=f'{what} must be one of {list(values)}')


# =============================================================================
# SECTION FORMS
# =============================================================================

class ProblemForm(Form):
    dimension = IntegerField(validators=[Optional(), AnyOf([1, 2], message='dimension must be 1 or 2')])
    extent = StringField(default='0 1', validators=[NumberList(counts=(2, 4))])
    n_cells = IntegerField(default=64, validators=[NumberRange(min=2, message='n_cells must be at least 2')])
    arity = StringField(default='scalar', validators=[_choice(['scalar', 'system'], 'arity')])
    family = StringField(default='', validators=[Optional(), _choice(FAMILIES, 'family')])
    bracket = StringField(default='none', validators=[_choice(BRACKET_MODES, 'bracket')])
    bracket_level = FloatField(default=1.0, validators=[GreaterThan(0, 'bracket_level must be positive')])
    system_subs = StringField(default='1 0.5', validators=[NumberList(counts=(2,), positive=True)])
    method = StringField(default='truncation', validators=[_choice(METHODS, 'method')])
    eps = FloatField(validators=[Optional(), GreaterThan(0, 'eps must be positive')])


class OperatorForm(Form):
    kind = StringField(default='r_laplacian', validators=[_choice(OPERATOR_KINDS, 'kind')])
    p = FloatField(validators=[InputRequired(message='p is required')])
    q = FloatField(validators=[Optional()])
    lam = FloatField(default=0.0)
    beta = FloatField(default=0.0)
    bc = StringField(default='robin', validators=[_choice(BOUNDARY_KINDS, 'bc')])


class TermForm(Form):
    kind = StringField(validators=[InputRequired(message='kind is required'),
                                   _choice(TERM_KINDS, 'kind')])
    coefficient = FloatField(default=1.0)
    field = StringField(default='1', validators=[expression])
    s_exp = FloatField(default=0.0)
    t_exp = FloatField(default=0.0)
    xi1_exp = FloatField(default=0.0)
    xi2_exp = FloatField(default=0.0)
    modulator = StringField(default='none', validators=[_choice(MODULATORS, 'modulator')])
    frequency = FloatField(default=1.0)
    shift = FloatField(default=0.0)
    component = StringField(default='')


class GrowthForm(Form):
    c = FloatField(default=1.0)
    gamma = FloatField(default=0.5)
    monotone_decreasing = StringField(default='true', validators=[boolean_word])
    singular_limit = StringField(default='true', validators=[boolean_word])


class ParametersForm(Form):
    alpha1 = FloatField(validators=[Optional()])
    beta1 = FloatField(validators=[Optional()])
    gamma1 = FloatField(validators=[Optional()])
    delta1 = FloatField(validators=[Optional()])
    alpha2 = FloatField(validators=[Optional()])
    beta2 = FloatField(validators=[Optional()])
    gamma2 = FloatField(validators=[Optional()])
    delta2 = FloatField(validators=[Optional()])
    eta = FloatField(validators=[Optional()])


class FamilyForm(Form):
    coefficient = StringField(default='1', validators=[expression])
    convection = FloatField(default=1.0)
    growth = FloatField(default=1.0)
    perturbation = StringField(default='0', validators=[expression])
    amplitude = FloatField(default=0.01)
    frequency = FloatField(validators=[Optional()])


class SolverForm(Form):
    tol = FloatField(default=TOL_SOLVER, validators=[GreaterThan(0, 'tol must be positive')])
    tol_fp = FloatField(default=TOL_FP, validators=[GreaterThan(0, 'tol_fp must be positive')])
    max_outer = IntegerField(default=MAX_OUTER, validators=[NumberRange(min=1, message='max_outer must be at least 1')])
    max_newton = IntegerField(default=MAX_NEWTON, validators=[NumberRange(min=1, message='max_newton must be at least 1')])
    seed = IntegerField(default=DEFAULT_SEED, validators=[NumberRange(min=0, message='seed must be nonnegative')])
    gradient_cap = FloatField(default=GRADIENT_CAP, validators=[GreaterThan(0, 'gradient_cap must be positive')])
    n_starts = IntegerField(default=N_STARTS, validators=[NumberRange(min=1, message='n_starts must be at least 1')])


class ExperimentForm(Form):
    kind = StringField(validators=[InputRequired(message='kind is required'),
                                   _choice(sorted(EXPERIMENT_RUNNERS), 'kind')])
    levels = StringField(default='', validators=[NumberList(cast=int)])
    seeds = StringField(default='', validators=[NumberList(cast=int)])
    eps_schedule = StringField(default=' '.join(map(repr, EPS_SCHEDULE)), validators=[NumberList()])
    ladder_size = IntegerField(default=LADDER_SIZE)
    starts = IntegerField(default=UNIQUENESS_STARTS)
    min_order = FloatField(validators=[Optional()])


class ManufacturedForm(Form):
    exact = StringField(validators=[Optional(), expression])
    convection = FloatField(default=0.0)


class OutputForm(Form):
    directory = StringField(default='out')


SECTION_FORMS = {
    'problem': ProblemForm,
    'operator': OperatorForm,
    'operator_q': OperatorForm,
    'growth': GrowthForm,
    'parameters': ParametersForm,
    'family': FamilyForm,
    'solver': SolverForm,
    'experiment': ExperimentForm,
    'manufactured': ManufacturedForm,
    'output': OutputForm,
}
TERM_PREFIX = 'term:'


@dataclass(frozen=True)
class RunConfig:
    recipe: ProblemRecipe
    solver: SolverOptions = field(default_factory=SolverOptions)
    experiment: ExperimentSpec = None
    output: str = 'out'
    warnings: tuple = ()
    source: str = field(default=None, compare=False)

    @property
    def digest(self):
        """sha256 of the normalized config text."""
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


# =============================================================================
# PARSING
# =============================================================================

def _words(text, cast=float):
    return [cast(w) for w in (text or '').split()]


def _error_line(exc):
    if getattr(exc, 'lineno', None) is not None:
        return exc.lineno
    errors = getattr(exc, 'errors', None)
    if errors:
        return errors[0][0]
    return None


def _read_ini(text, source):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#',))
    try:
        parser.read_string(text, source=source or '<config>')
    except configparser.Error as exc:
        message = getattr(exc, 'message', str(exc)).splitlines()[0]
        raise ParseError(message, line=_error_line(exc)) from exc
    return parser


def _section_form(parser, section, form_class, messages):
    """Validate one section; returns the form (data filled with defaults) or None."""
    items = parser.items(section) if parser.has_section(section) else []
    form = form_class(formdata=MultiDict([(KEY_ALIASES.get(k, k), v) for k, v in items]))
    unknown = [k for k, _ in items if KEY_ALIASES.get(k, k) not in form._fields]
    for key in unknown:
        messages.append(f'[{section}] unknown key {key!r}')
    if not form.validate():
        for name, errors in form.errors.items():
            key = {v: k for k, v in KEY_ALIASES.items()}.get(name, name)
            messages.extend(f'[{section}] {key}: {e}' for e in errors)
        return None
    return form


def _split_violations(exc):
    return str(exc).split('; ')


def _build_operator(form, section, messages):
    if form is None:
        return None
    data = form.data
    problems = operator_violations(data['kind'], data['p'], data['q'], data['lam'],
                                   data['beta'], data['bc'])
    if problems:
        messages.extend(f'[{section}] {p}' for p in problems)
        return None
    return OperatorSpec(data['kind'], data['p'], data['q'], data['lam'], data['beta'], data['bc'])


def _family_reaction(name, family, operator, parameters, messages):
    """Expand a named reaction family into its term list."""
    if name == 'h':
        if operator is None or 'eta' not in parameters:
            messages.append('[family] the h family needs [operator] p and [parameters] eta')
            return None
        return h_family(operator.p, parameters['eta'], family['coefficient'],
                        family['convection'], family['growth'])
    if name == 'fg':
        missing = [k for k in CHAIN_PARAMETERS if k not in parameters]
        if missing:
            messages.append(f'[family] the fg family needs [parameters] {", ".join(missing)}')
            return None
        return fg_family(*(parameters[k] for k in CHAIN_PARAMETERS))
    extra = {} if family['frequency'] is None else {'frequency': family['frequency']}
    return ladder_reaction(operator.p if operator else 2.0, family['perturbation'],
                           family['amplitude'], **extra)


def _build_reaction(parser, problem, operator, messages):
    arity = problem['arity'] if problem else 'scalar'
    default_component = 'h' if arity == 'scalar' else 'f'

    terms = []
    for section in parser.sections():
        if not section.startswith(TERM_PREFIX):
            continue
        form = _section_form(parser, section, TermForm, messages)
        if form is None:
            continue
        data = dict(form.data)
        data['component'] = data['component'] or default_component
        terms.append(ReactionTerm(**data))

    parameters = {}
    params_form = _section_form(parser, 'parameters', ParametersForm, messages)
    if params_form is not None:
        parameters = {k: v for k, v in params_form.data.items() if v is not None}

    metadata = None
    if parser.has_section('growth'):
        growth = _section_form(parser, 'growth', GrowthForm, messages)
        if growth is not None:
            metadata = SingularMetadata(
                monotone_decreasing=BOOLEAN_WORDS[growth.data['monotone_decreasing'].lower()],
                singular_limit=BOOLEAN_WORDS[growth.data['singular_limit'].lower()],
                growth_C=growth.data['c'],
                growth_gamma=growth.data['gamma'],
            )

    family_name = problem['family'] if problem else ''
    if family_name:
        family_form = _section_form(parser, 'family', FamilyForm, messages)
        if family_form is None:
            return None
        try:
            base = _family_reaction(family_name, family_form.data, operator, parameters, messages)
        except ValueError as exc:
            messages.extend(f'[family] {p}' for p in _split_violations(exc))
            return None
        if base is None:
            return None
        terms = list(base.terms) + terms
        parameters = {**base.parameters, **parameters}
        metadata = metadata or base.metadata

    try:
        return ReactionSpec(arity, tuple(terms), parameters, metadata)
    except ValueError as exc:
        messages.extend(f'[reaction] {p}' for p in _split_violations(exc))
        return None


def _extent(text):
    values = _words(text)
    if len(values) == 2:
        return (values[0], values[1])
    return ((values[0], values[1]), (values[2], values[3]))


def _extent_violations(extent, dimension):
    pairs = (extent,) if len(extent) == 2 and not isinstance(extent[0], tuple) else extent
    problems = [f'[problem] extent {lo:g} {hi:g} must be increasing'
                for lo, hi in pairs if not hi > lo]
    if dimension is not None and dimension != len(pairs):
        problems.append(f'[problem] dimension {dimension} does not match the extent')
    return problems


def _consistency(recipe, experiment):
    """Cross-section checks that no single form can see."""
    problems = []
    op = recipe.operator
    if recipe.arity == 'system':
        if recipe.operator_q is None:
            problems.append('[operator_q] systems need a second operator')
        elif op.bc != 'neumann' or recipe.operator_q.bc != 'neumann':
            problems.append('[operator] systems are posed with Neumann conditions only')
        if recipe.bracket != 'system':
            problems.append('[problem] systems use bracket = system')
        if recipe.eps is not None:
            problems.append('[problem] the eps shift applies to scalar problems only')
    else:
        if recipe.bracket == 'system':
            problems.append('[problem] bracket = system needs arity = system')
        if recipe.bracket == 'constant' and op.bc != 'neumann':
            problems.append('[problem] constant brackets need bc = neumann')
        if recipe.bracket == 'distance' and op.bc == 'neumann':
            problems.append('[problem] distance brackets need bc = dirichlet or robin')
        if recipe.reaction.has_singular_terms and recipe.bracket == 'none' and recipe.eps is None:
            problems.append('[problem] singular reactions need a bracket or method = shift')
    if experiment is not None:
        if experiment.kind == 'convergence' and recipe.exact is None:
            problems.append('[manufactured] convergence experiments need an exact solution')
        if experiment.kind == 'multiplicity' and op.bc != 'neumann':
            problems.append('[experiment] multiplicity ladders need bc = neumann')
    return problems


def parse_config_text(text, source=None):
    """
    Parse and validate config text.

    Returns:
        RunConfig with every default filled in.

    Raises:
        ParseError for malformed INI (with its line number),
        ConfigValidationError listing every violated invariant.
    """
    parser = _read_ini(text, source)
    messages = []

    known = set(SECTION_FORMS)
    for section in parser.sections():
        if section not in known and not section.startswith(TERM_PREFIX):
            messages.append(f'unknown section [{section}]')
    if not parser.has_section('operator'):
        messages.append('missing section [operator]')

    problem_form = _section_form(parser, 'problem', ProblemForm, messages)
    problem = problem_form.data if problem_form is not None else None
    operator = (_build_operator(_section_form(parser, 'operator', OperatorForm, messages),
                                'operator', messages)
                if parser.has_section('operator') else None)
    operator_q = None
    if parser.has_section('operator_q'):
        operator_q = _build_operator(_section_form(parser, 'operator_q', OperatorForm, messages),
                                     'operator_q', messages)
    reaction = _build_reaction(parser, problem, operator, messages)

    solver_form = _section_form(parser, 'solver', SolverForm, messages)
    manufactured = _section_form(parser, 'manufactured', ManufacturedForm, messages)
    output = _section_form(parser, 'output', OutputForm, messages)

    experiment = None
    if parser.has_section('experiment'):
        exp_form = _section_form(parser, 'experiment', ExperimentForm, messages)
        if exp_form is not None:
            data = exp_form.data
            try:
                experiment = ExperimentSpec(
                    kind=data['kind'],
                    levels=tuple(_words(data['levels'], int)),
                    seeds=tuple(_words(data['seeds'], int)),
                    eps_schedule=tuple(_words(data['eps_schedule'])),
                    ladder_size=data['ladder_size'],
                    starts=data['starts'],
                    min_order=data['min_order'],
                )
            except ValueError as exc:
                messages.extend(f'[experiment] {p}' for p in _split_violations(exc))

    if problem is not None:
        messages.extend(_extent_violations(_extent(problem['extent']), problem['dimension']))
        if problem['method'] == 'shift' and problem['eps'] is None:
            messages.append('[problem] method = shift needs eps')

    if messages or None in (problem, operator, reaction, solver_form, manufactured, output):
        raise ConfigValidationError(messages or ['invalid config'])

    recipe = ProblemRecipe(
        extent=_extent(problem['extent']),
        n_cells=problem['n_cells'],
        operator=operator,
        reaction=reaction,
        operator_q=operator_q,
        bracket=problem['bracket'],
        bracket_level=problem['bracket_level'],
        system_subs=tuple(_words(problem['system_subs'])),
        eps=problem['eps'] if problem['method'] == 'shift' else None,
        exact=manufactured.data['exact'] or None,
        convection=manufactured.data['convection'],
    )
    problems = _consistency(recipe, experiment)
    if problems:
        raise ConfigValidationError(problems)

    warnings = []
    if recipe.arity == 'system' and all(k in reaction.parameters for k in CHAIN_PARAMETERS):
        if not check_parameter_chain(reaction, operator.p, operator_q.p):
            warnings.append('parameter chain max{g1,d1} < b1-a1 < p-1, '
                            'max{g2,d2} < a2-b2 < q-1 fails')

    return RunConfig(
        recipe=recipe,
        solver=SolverOptions(**solver_form.data),
        experiment=experiment,
        output=output.data['directory'],
        warnings=tuple(warnings),
        source=source,
    )


def parse_config(path):
    """Read and validate the config file at `path`."""
    if not os.path.isfile(path):
        raise ParseError(f'config file not found: {path}')
    with open(path) as handle:
        text = handle.read()
    return parse_config_text(text, source=path)


# =============================================================================
# SERIALIZATION
# =============================================================================

def _text(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ' '.join(_text(v) for v in value)
    return str(value)


def _operator_section(spec):
    section = {'kind': spec.kind, 'p': spec.p, 'lambda': spec.lam, 'beta': spec.beta,
               'bc': spec.bc}
    if spec.q is not None:
        section['q'] = spec.q
    return section


def _extent_words(extent):
    if isinstance(extent[0], tuple):
        return [v for pair in extent for v in pair]
    return list(extent)


def config_sections(config):
    """The normalized config as an ordered {section: {key: value}} mapping."""
    recipe = config.recipe
    reaction = recipe.reaction
    extent = _extent_words(recipe.extent)
    problem = {
        'dimension': len(extent) // 2,
        'extent': [float(v) for v in extent],
        'n_cells': recipe.n_cells,
        'arity': reaction.arity,
        'bracket': recipe.bracket,
        'bracket_level': float(recipe.bracket_level),
        'system_subs': [float(v) for v in recipe.system_subs],
        'method': 'truncation' if recipe.eps is None else 'shift',
    }
    if recipe.eps is not None:
        problem['eps'] = float(recipe.eps)

    sections = {'problem': problem, 'operator': _operator_section(recipe.operator)}
    if recipe.operator_q is not None:
        sections['operator_q'] = _operator_section(recipe.operator_q)
    for index, term in enumerate(reaction.terms, start=1):
        sections[f'{TERM_PREFIX}t{index}'] = {k: (float(v) if isinstance(v, (int, float)) else v)
                                              for k, v in term.to_record().items()}
    meta = reaction.metadata
    if meta is not None:
        sections['growth'] = {'c': float(meta.growth_C), 'gamma': float(meta.growth_gamma),
                              'monotone_decreasing': meta.monotone_decreasing,
                              'singular_limit': meta.singular_limit}
    if reaction.parameters:
        sections['parameters'] = {k: float(v) for k, v in reaction.parameters.items()}
    sections['solver'] = {
        'tol': float(config.solver.tol), 'tol_fp': float(config.solver.tol_fp),
        'max_outer': config.solver.max_outer, 'max_newton': config.solver.max_newton,
        'seed': config.solver.seed, 'gradient_cap': float(config.solver.gradient_cap),
        'n_starts': config.solver.n_starts,
    }
    exp = config.experiment
    if exp is not None:
        sections['experiment'] = {
            'kind': exp.kind, 'levels': list(exp.levels), 'seeds': list(exp.seeds),
            'eps_schedule': [float(e) for e in exp.eps_schedule],
            'ladder_size': exp.ladder_size, 'starts': exp.starts,
        }
        if exp.min_order is not None:
            sections['experiment']['min_order'] = float(exp.min_order)
    if recipe.exact is not None or recipe.convection:
        sections['manufactured'] = {'convection': float(recipe.convection)}
        if recipe.exact is not None:
            sections['manufactured']['exact'] = recipe.exact
    sections['output'] = {'directory': config.output}
    return sections


def dump_config(config):
    """Write the normalized INI text; parsing it gives back an equal RunConfig."""
    lines = []
    for name, values in config_sections(config).items():
        lines.append(f'[{name}]')
        lines.extend(f'{key} = {_text(value)}' for key, value in values.items())
        lines.append('')
    return '\n'.join(lines)


def with_overrides(config, seed=None, output=None):
    """Apply the --seed / --out command-line overrides."""
    if seed is not None:
        config = replace(config, solver=replace(config.solver, seed=seed))
        if config.experiment is not None and config.experiment.seeds:
            config = replace(config, experiment=replace(config.experiment, seeds=(seed,)))
    if output is not None:
        config = replace(config, output=output)
    return config
