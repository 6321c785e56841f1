"""
Problem containers and the recipe that rebuilds a problem at any grid level.
"""
from dataclasses import dataclass, replace

import numpy as np

from .config.settings import (
    DEFAULT_SEED, GRADIENT_CAP, MAX_NEWTON, MAX_OUTER, N_STARTS, TOL_FP, TOL_SOLVER,
)
from .grid import build_grid
from .reactions import ReactionTerm, shift_reaction

BRACKET_MODES = ['none', 'constant', 'distance', 'torsion', 'shifted', 'system']


@dataclass(frozen=True, eq=False)
class ScalarProblem:
    """
    −div a(∇u) + λ|u|^(p-2)u = h(x, u, ∇u) in Ω with the operator's boundary
    condition. `source` and `boundary_load` carry manufactured forcing only.
    """
    grid: object
    operator: object
    reaction: object
    source: np.ndarray = None
    boundary_load: np.ndarray = None
    exact: object = None

    arity = 'scalar'

    def with_reaction(self, reaction):
        return replace(self, reaction=reaction)


@dataclass(frozen=True, eq=False)
class SystemProblem:
    """Neumann (p,q)-system −Δ_p u = f(x,u,v,∇u,∇v), −Δ_q v = g(x,u,v,∇u,∇v)."""
    grid: object
    operator: object
    operator_q: object
    reaction: object

    arity = 'system'

    @property
    def operators(self):
        return (self.operator, self.operator_q)


@dataclass(frozen=True)
class ProblemRecipe:
    extent: tuple
    n_cells: int
    operator: object
    reaction: object
    operator_q: object = None
    bracket: str = 'none'
    bracket_level: float = 1.0
    system_subs: tuple = (1.0, 0.5)
    eps: float = None
    exact: str = None
    convection: float = 0.0

    @property
    def arity(self):
        return self.reaction.arity

    def build(self, n_cells=None):
        """Build the problem on a grid with `n_cells` per axis (default: the recipe's)."""
        grid = build_grid(self.extent, n_cells or self.n_cells)
        if self.arity == 'system':
            return SystemProblem(grid, self.operator.with_potential(1.0),
                                 self.operator_q.with_potential(1.0), self.reaction)
        reaction = self.reaction
        if self.convection:
            term = ReactionTerm('convective', self.convection, xi1_exp=self.operator.p - 1)
            reaction = replace(reaction, terms=reaction.terms + (term,))
        if self.eps:
            reaction = shift_reaction(reaction, self.eps)
        if self.exact is None:
            return ScalarProblem(grid, self.operator, reaction)
        from .experiments.manufactured import manufactured_forcing
        source, load, expr = manufactured_forcing(grid, self.operator, reaction, self.exact)
        return ScalarProblem(grid, self.operator, reaction, source, load, expr)

    def build_bracket(self, problem):
        """The bracket the recipe asks for, or None for 'none'."""
        from . import bracket as brackets
        mode = 'shifted' if self.eps else self.bracket
        if mode == 'none':
            return None
        if mode == 'constant':
            return brackets.constant_subsolution(problem, self.bracket_level)
        if mode == 'distance':
            return brackets.distance_subsolution(problem, self.bracket_level)
        if mode == 'torsion':
            return brackets.torsion_subsolution(problem, self.bracket_level)
        if mode == 'shifted':
            return brackets.shifted_bracket(problem, self.eps)
        if mode == 'system':
            return brackets.system_brackets(problem, self.system_subs)
        raise ValueError(f'bracket mode must be one of {BRACKET_MODES}, got {mode!r}')


@dataclass(frozen=True)
class SolverOptions:
    tol: float = TOL_SOLVER
    tol_fp: float = TOL_FP
    max_outer: int = MAX_OUTER
    max_newton: int = MAX_NEWTON
    seed: int = DEFAULT_SEED
    gradient_cap: float = GRADIENT_CAP
    n_starts: int = N_STARTS
