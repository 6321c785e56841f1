"""
Verification campaigns.

Every runner takes (ExperimentSpec, ProblemRecipe, SolverOptions) and returns
a result dict: 'table' rows with their 'columns', a flat 'summary', named
'solutions' for the per-node CSVs, and 'passed' for the asserted checks.
"""
from dataclasses import dataclass

from ..config.settings import EPS_SCHEDULE, LADDER_SIZE, UNIQUENESS_STARTS
from .audit import run_audit
from .desingularization import run_compare_desingularization
from .manufactured import run_convergence
from .multiplicity import run_multiplicity
from .uniqueness import run_uniqueness

EXPERIMENT_RUNNERS = {
    'convergence': run_convergence,
    'uniqueness': run_uniqueness,
    'multiplicity': run_multiplicity,
    'compare_desingularization': run_compare_desingularization,
    'hypothesis_audit': run_audit,
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    levels: tuple = ()
    seeds: tuple = ()
    output: str = None
    eps_schedule: tuple = EPS_SCHEDULE
    ladder_size: int = LADDER_SIZE
    starts: int = UNIQUENESS_STARTS
    min_order: float = None

    def __post_init__(self):
        problems = experiment_violations(self)
        if problems:
            raise ValueError('; '.join(problems))


def experiment_violations(exp):
    problems = []
    if exp.kind not in EXPERIMENT_RUNNERS:
        problems.append(f'experiment kind must be one of {sorted(EXPERIMENT_RUNNERS)}')
    levels = list(exp.levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        problems.append('grid levels must be strictly increasing')
    if exp.kind == 'convergence' and len(levels) < 2:
        problems.append('convergence experiments need at least 2 grid levels')
    if any(e <= 0 for e in exp.eps_schedule):
        problems.append('eps schedule entries must be positive')
    if exp.ladder_size < 1:
        problems.append('ladder size must be at least 1')
    if exp.starts < 1:
        problems.append('uniqueness needs at least 1 start')
    if exp.min_order is not None and not exp.min_order > 0:
        problems.append('min_order must be positive')
    return problems


def run_experiment(exp, recipe, options):
    """Dispatch to the runner registered for exp.kind."""
    return EXPERIMENT_RUNNERS[exp.kind](exp, recipe, options)
