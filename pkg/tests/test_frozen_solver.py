import numpy as np
import pytest
import scipy.sparse as sp

from singular_pde.bracket import Bracket, torsion_subsolution
from singular_pde.errors import BracketViolation, LineSearchStall, MaxItersExceeded, SingularDomain
from singular_pde.frozen_solver import (
    FrozenRHS, minimize_energy, solve_frozen_scalar, solve_frozen_system,
)
from singular_pde.grid import build_grid
from singular_pde.operators import (
    OperatorSpec, energy_gradient, energy_hessian, free_mask, frozen_energy,
)
from singular_pde.problems import ProblemRecipe, ScalarProblem
from singular_pde.reactions import fg_family

CHAIN_VALID = dict(alpha1=0.1, beta1=0.6, gamma1=0.25, delta1=0.25,
                   alpha2=0.6, beta2=0.1, gamma2=0.25, delta2=0.25)


def _dense_solution(grid, spec, source, load):
    """Direct solve of the linear p = 2 system K u + beta B u + lambda M u = M f + load."""
    stiffness = sum((d.T @ np.diag(grid.cell_measures) @ d.toarray()) for d in grid.cell_gradients)
    matrix = np.asarray(stiffness) + spec.lam * np.diag(grid.volumes)
    if spec.bc == 'robin':
        b = grid.boundary_nodes
        matrix[b, b] += spec.beta * grid.surface_weights
    rhs = grid.volumes * source + load
    free = free_mask(grid, spec)
    u = np.zeros(grid.n_nodes)
    u[free] = np.linalg.solve(matrix[np.ix_(free, free)], rhs[free])
    return u


@pytest.mark.parametrize('spec', [
    OperatorSpec('r_laplacian', 2.0, beta=1.0, bc='robin'),
    OperatorSpec('r_laplacian', 2.0, lam=1.0, bc='neumann'),
    OperatorSpec('r_laplacian', 2.0, bc='dirichlet'),
], ids=['robin', 'neumann', 'dirichlet'])
def test_linear_solve_matches_dense_oracle(spec):
    grid = build_grid((0.0, 1.0), 64)
    x = grid.coords[:, 0]
    source = 1.0 + np.sin(3 * x)
    load = np.zeros(grid.n_nodes)
    if spec.bc != 'dirichlet':
        load[grid.boundary_nodes] = [0.5, -0.25]
    rhs = FrozenRHS(grid, source=source, active=free_mask(grid, spec),
                    boundary_load=None if spec.bc == 'dirichlet' else load)
    report = solve_frozen_scalar(spec, rhs, None, grid.constant(0.0), tol=1e-10)
    expected = _dense_solution(grid, spec, source, load)
    assert report.converged
    assert np.max(np.abs(report.solution.values - expected)) <= 1e-10


def test_linear_solve_in_2d_matches_dense_oracle(square):
    spec = OperatorSpec('r_laplacian', 2.0, lam=0.5, beta=1.0, bc='robin')
    source = 1.0 + square.coords[:, 0] * square.coords[:, 1]
    rhs = FrozenRHS(square, source=source)
    report = solve_frozen_scalar(spec, rhs, None, square.constant(1.0), tol=1e-10)
    expected = _dense_solution(square, spec, source, np.zeros(square.n_nodes))
    assert np.max(np.abs(report.solution.values - expected)) <= 1e-10


def test_energy_decreases_along_the_trajectory(headline_problem):
    bracket = torsion_subsolution(headline_problem, 1.0)
    rhs = FrozenRHS.scalar(headline_problem, bracket.sub, bracket)
    report = solve_frozen_scalar(headline_problem.operator, rhs, bracket, bracket.sub)
    energies = report.energies
    assert report.residual <= 1e-10
    assert all(b < a or abs(b - a) <= 1e-10 * (1 + abs(a)) for a, b in zip(energies, energies[1:]))
    assert energies[-1] < energies[0]


def test_truncated_solve_stays_above_the_subsolution(headline_problem):
    bracket = torsion_subsolution(headline_problem, 1.0)
    rhs = FrozenRHS.scalar(headline_problem, bracket.sub, bracket)
    report = solve_frozen_scalar(headline_problem.operator, rhs, bracket, bracket.sub)
    assert report.comparison_ok
    assert report.comparison_min >= -1e-8 * bracket.sub.sup


def test_comparison_failure_raises_bracket_violation(source_reaction):
    grid = build_grid((0.0, 1.0), 16)
    spec = OperatorSpec('r_laplacian', 2.0, lam=1.0, bc='neumann')
    problem = ScalarProblem(grid, spec, source_reaction('1'))
    bogus = Bracket(grid.constant(5.0))
    rhs = FrozenRHS.scalar(problem, bogus.sub, bogus)
    with pytest.raises(BracketViolation) as info:
        solve_frozen_scalar(spec, rhs, bogus, bogus.sub)
    assert info.value.report.status == 'bracket_violation'
    assert info.value.report.comparison_min == pytest.approx(-4.0, abs=1e-6)

    report = solve_frozen_scalar(spec, rhs, bogus, bogus.sub, enforce_comparison=False)
    assert not report.comparison_ok


def test_singular_rhs_needs_a_bracket(headline_problem):
    with pytest.raises(SingularDomain):
        FrozenRHS.scalar(headline_problem, headline_problem.grid.constant(1.0))


def test_iteration_cap_carries_the_report():
    grid = build_grid((0.0, 1.0), 16)
    spec = OperatorSpec('r_laplacian', 3.0, beta=1.0, bc='robin')
    rhs = FrozenRHS(grid, source=np.ones(grid.n_nodes))
    init = grid.constant(0.0)
    with pytest.raises(MaxItersExceeded) as info:
        minimize_energy(lambda u: frozen_energy(u, rhs, spec),
                        lambda u: energy_gradient(u, rhs, spec),
                        init, 1e-10, lambda u: energy_hessian(u, rhs, spec), max_iters=0)
    assert info.value.report.status == 'max_iters'
    assert info.value.report.iterations == 0


def _quadratic(grid):
    """Gradient and Hessian of sum_i vol_i (u_i - (1 + x_i))^2 / 2."""
    target = 1.0 + grid.coords[:, 0]
    return (lambda u: u.with_values(grid.volumes * (u.values - target)),
            lambda u: sp.diags(grid.volumes))


def test_roundoff_level_energy_change_needs_a_falling_residual():
    grid = build_grid((0.0, 1.0), 8)
    grad, hess = _quadratic(grid)
    report = minimize_energy(lambda u: 0.0, grad, grid.constant(0.0), 1e-10, hess)
    assert report.status == 'converged'
    assert report.iterations == 1
    assert np.allclose(report.solution.values, 1.0 + grid.coords[:, 0])


def test_rising_energy_is_never_accepted():
    grid = build_grid((0.0, 1.0), 8)
    grad, hess = _quadratic(grid)
    calls = iter(range(10 ** 6))
    with pytest.raises(LineSearchStall) as info:
        minimize_energy(lambda u: 1e-3 * next(calls), grad, grid.constant(0.0), 1e-10, hess)
    assert info.value.report.status == 'stall'
    assert info.value.report.energies == [0.0]


def test_antiderivative_is_consistent_outside_the_bracket(headline_problem, rng):
    grid = headline_problem.grid
    bracket = Bracket(grid.constant(0.2), grid.constant(2.0))
    w = grid.field(0.5 + 0.1 * np.sin(np.pi * grid.coords[:, 0]))
    rhs = FrozenRHS.scalar(headline_problem, w, bracket)
    s = rng.uniform(-1.0, 3.0, grid.n_nodes)
    s = np.where(np.abs(s - 0.2) < 1e-3, 0.25, s)
    s = np.where(np.abs(s - 2.0) < 1e-3, 2.5, s)
    h = 1e-6
    numeric = (rhs.antiderivative(s + h) - rhs.antiderivative(s - h)) / (2 * h)
    assert np.allclose(numeric, rhs.values(s), rtol=1e-6, atol=1e-6)
    outside = (s < 0.2) | (s > 2.0)
    assert np.all(rhs.derivative(s)[outside] == 0.0)


def test_scaled_rhs(headline_problem):
    grid = headline_problem.grid
    bracket = Bracket(grid.constant(0.2), grid.constant(2.0))
    rhs = FrozenRHS.scalar(headline_problem, grid.constant(1.0), bracket)
    s = np.full(grid.n_nodes, 1.0)
    assert np.allclose(rhs.scaled(4.0).values(s), 4.0 * rhs.values(s))


def test_system_components_decouple():
    recipe = ProblemRecipe((0.0, 1.0), 16, OperatorSpec('r_laplacian', 2.0, bc='neumann'),
                           fg_family(**CHAIN_VALID),
                           operator_q=OperatorSpec('r_laplacian', 2.0, bc='neumann'))
    problem = recipe.build()
    grid = problem.grid
    z = (grid.field(1.0 + 0.2 * grid.coords[:, 0]), grid.constant(0.5))
    rhs = (FrozenRHS.system(problem, 'f', z, z), FrozenRHS.system(problem, 'g', z, z))
    forward = solve_frozen_system(problem.operators, rhs)
    backward = solve_frozen_system(problem.operators[::-1], rhs[::-1])
    assert [r.component for r in forward] == ['u', 'v']
    assert np.allclose(forward[0].solution.values, backward[1].solution.values, atol=1e-12)
    assert np.allclose(forward[1].solution.values, backward[0].solution.values, atol=1e-12)


def test_system_rhs_rejects_nonpositive_values():
    recipe = ProblemRecipe((0.0, 1.0), 8, OperatorSpec('r_laplacian', 2.0, bc='neumann'),
                           fg_family(**CHAIN_VALID),
                           operator_q=OperatorSpec('r_laplacian', 2.0, bc='neumann'))
    problem = recipe.build()
    z = (problem.grid.constant(0.0), problem.grid.constant(1.0))
    with pytest.raises(SingularDomain):
        FrozenRHS.system(problem, 'f', z, z)


def test_report_row_columns(headline_problem):
    bracket = torsion_subsolution(headline_problem, 1.0)
    rhs = FrozenRHS.scalar(headline_problem, bracket.sub, bracket)
    row = solve_frozen_scalar(headline_problem.operator, rhs, bracket, bracket.sub).to_row()
    assert list(row) == ['component', 'iterations', 'residual', 'energy', 'comparison_min',
                         'comparison_ok', 'backtracks', 'regularized_steps', 'status']
    assert row['status'] == 'converged'
