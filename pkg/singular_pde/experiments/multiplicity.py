"""
Ordered multiplicity for Neumann problems: a ladder of constant sub/super
pairs, one bracketed solve per rung, and an ordering certificate.
"""
import itertools
import logging

import numpy as np

from ..bracket import ladder_brackets
from ..config.settings import MULTIPLICITY_MIN_GAP, TOL_CMP_FACTOR
from ..fixed_point import iterate_scalar

logger = logging.getLogger(__name__)


def ordering_certificate(solutions, brackets, min_gap=MULTIPLICITY_MIN_GAP):
    """
    Checks u_sub_n <= u_n <= u_super_n, max(u_n) < min(u_{n+1}) and pairwise
    sup-distances >= min_gap. The chain is verified on every pair, not only
    on neighbours.
    """
    inside = []
    for u, b in zip(solutions, brackets):
        tol = TOL_CMP_FACTOR * b.super.sup
        inside.append(bool(np.all(u.values >= b.sub.values - tol)
                           and np.all(u.values <= b.super.values + tol)))
    ordered, separated = [], []
    for i, j in itertools.combinations(range(len(solutions)), 2):
        ordered.append(bool(solutions[i].values.max() < solutions[j].values.min()))
        separated.append(float(np.max(np.abs(solutions[i].values - solutions[j].values))))
    return {
        'bracketed': inside,
        'ordered': all(ordered),
        'min_distance': min(separated) if separated else None,
        'separated': all(d >= min_gap for d in separated),
        'ok': all(inside) and all(ordered) and all(d >= min_gap for d in separated),
    }


def run_multiplicity(exp, recipe, options):
    problem = recipe.build()
    brackets = ladder_brackets(problem, exp.ladder_size)
    solutions, rows = [], []
    for rung, bracket in enumerate(brackets, start=1):
        u, trace = iterate_scalar(problem, bracket, tol_fp=options.tol_fp,
                                  max_outer=options.max_outer, tol=options.tol,
                                  max_newton=options.max_newton)
        solutions.append(u)
        rows.append({'rung': rung, 'sub': bracket.parameters['c'], 'super': bracket.parameters['M'],
                     'min_u': float(u.values.min()), 'max_u': float(u.values.max()),
                     'outer_iterations': trace.iterations})
        logger.info('rung %d in [%g, %g]: u in [%.6f, %.6f]', rung, bracket.parameters['c'],
                    bracket.parameters['M'], u.values.min(), u.values.max())
    certificate = ordering_certificate(solutions, brackets)
    return {
        'table': rows,
        'columns': ['rung', 'sub', 'super', 'min_u', 'max_u', 'outer_iterations'],
        'summary': {'kind': 'multiplicity', 'solutions': len(solutions), **certificate},
        'solutions': [(f'rung_{i + 1}', u) for i, u in enumerate(solutions)],
        'passed': certificate['ok'],
        'certificate': certificate,
    }
