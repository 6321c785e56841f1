"""
Uniqueness at p = 2: the full scalar pipeline from several starting iterates
must land on the same solution.
"""
import itertools
import logging

import numpy as np

from ..config.settings import UNIQUENESS_TOL
from ..fixed_point import iterate_scalar

logger = logging.getLogger(__name__)


def starting_iterates(problem, bracket, count, seed):
    """u_sub, u_sub + 1, then seeded random fields in [u_sub, u_sub + 2]."""
    grid = problem.grid
    base = bracket.sub.values if bracket is not None else np.zeros(grid.n_nodes)
    rng = np.random.default_rng(seed)
    starts = [base, base + 1.0]
    while len(starts) < count:
        starts.append(base + 2.0 * rng.uniform(0.0, 1.0, grid.n_nodes))
    return [grid.field(s) for s in starts[:count]]


def run_uniqueness(exp, recipe, options):
    problem = recipe.build()
    bracket = recipe.build_bracket(problem)
    seed = exp.seeds[0] if exp.seeds else options.seed
    solutions = []
    for index, w0 in enumerate(starting_iterates(problem, bracket, exp.starts, seed)):
        u, trace = iterate_scalar(problem, bracket, w0=w0, tol_fp=options.tol_fp,
                                  max_outer=options.max_outer, tol=options.tol,
                                  max_newton=options.max_newton)
        logger.info('start %d: %d outer iterations', index, trace.iterations)
        solutions.append(u)

    rows = []
    for i, j in itertools.combinations(range(len(solutions)), 2):
        distance = float(np.max(np.abs(solutions[i].values - solutions[j].values)))
        rows.append({'start_i': i, 'start_j': j, 'sup_distance': distance})
    worst = max((r['sup_distance'] for r in rows), default=0.0)
    unique = worst <= UNIQUENESS_TOL
    asserted = problem.operator.p == 2
    if not unique:
        logger.warning('starts disagree by %.3e (p=%g)', worst, problem.operator.p)
    return {
        'table': rows,
        'columns': ['start_i', 'start_j', 'sup_distance'],
        'summary': {'kind': 'uniqueness', 'starts': len(solutions), 'max_distance': worst,
                    'unique': unique, 'asserted': asserted},
        'solutions': [('start_0', solutions[0])],
        'passed': unique or not asserted,
    }
