import numpy as np
import pytest

from singular_pde.bracket import Bracket, system_brackets, torsion_subsolution
from singular_pde.errors import NoConvergence, TrappingExit
from singular_pde.fixed_point import (
    FixedPointTrace, c1_distance, calibrate_gradient_constant, gradient_bound_check,
    iterate_scalar, iterate_system, minimal_selection_probe, unfrozen_residual,
)
from singular_pde.frozen_solver import FrozenRHS, solve_frozen_scalar
from singular_pde.grid import build_grid
from singular_pde.operators import OperatorSpec, free_mask
from singular_pde.problems import ProblemRecipe, ScalarProblem
from singular_pde.reactions import check_parameter_chain, fg_family, ladder_reaction

CHAIN_VALID = dict(alpha1=0.1, beta1=0.5, gamma1=0.2, delta1=0.2,
                   alpha2=0.6, beta2=0.1, gamma2=0.3, delta2=0.3)


@pytest.fixture
def system_problem():
    neumann = OperatorSpec('r_laplacian', 2.0, bc='neumann')
    recipe = ProblemRecipe((0.0, 1.0), 32, neumann, fg_family(**CHAIN_VALID), operator_q=neumann)
    return recipe.build()


def test_headline_fixed_point(headline_problem):
    bracket = torsion_subsolution(headline_problem, 1.0)
    u, trace = iterate_scalar(headline_problem, bracket)
    final = trace.final
    assert trace.converged and trace.residual_ok
    assert final['c1_distance'] <= 1e-8
    assert final['unfrozen_residual'] <= 1e-6 * (1 + final['rhs_sup'])
    assert all(r <= 0.9 for r in trace.contraction_ratios())
    assert np.min(u.values - bracket.sub.values) >= 0


def test_headline_fixed_point_is_deterministic(headline_problem):
    bracket = torsion_subsolution(headline_problem, 1.0)
    first, _ = iterate_scalar(headline_problem, bracket)
    second, _ = iterate_scalar(headline_problem, bracket)
    assert np.array_equal(first.values, second.values)


def test_unfrozen_residual_of_the_limit(headline_problem):
    bracket = torsion_subsolution(headline_problem, 1.0)
    u, trace = iterate_scalar(headline_problem, bracket)
    residual, rhs_sup = unfrozen_residual(headline_problem, u, bracket)
    assert residual == pytest.approx(trace.final['unfrozen_residual'])
    assert rhs_sup > 1.0


def test_outer_cap_raises_with_trace(headline_problem):
    bracket = torsion_subsolution(headline_problem, 1.0)
    with pytest.raises(NoConvergence) as info:
        iterate_scalar(headline_problem, bracket, max_outer=1)
    assert info.value.trace.iterations == 1
    assert info.value.exit_code == 4


def test_gradient_free_reaction_converges_on_second_iteration(interval, source_reaction):
    spec = OperatorSpec('r_laplacian', 2.0, lam=1.0, bc='neumann')
    problem = ScalarProblem(interval, spec, source_reaction('1 + x'))
    _, trace = iterate_scalar(problem, None)
    assert trace.iterations == 2
    assert trace.final['c1_distance'] == 0.0


def test_c1_distance_sees_gradients(interval):
    x = interval.coords[:, 0]
    u = interval.field(np.sin(np.pi * x))
    assert c1_distance(u, u) == 0.0
    shifted = u.with_values(u.values + 0.1)
    assert c1_distance(u, shifted) == pytest.approx(0.1)
    tilted = u.with_values(u.values + 0.1 * x)
    assert c1_distance(u, tilted) == pytest.approx(0.1)


def test_contraction_ratios():
    trace = FixedPointTrace([{'sup_distance': d} for d in (1.0, 0.5, 0.25, 0.0, 0.0)])
    assert trace.contraction_ratios(last=3) == [0.5, 0.0, 0.0]


def test_system_converges_inside_the_trap(system_problem):
    assert check_parameter_chain(system_problem.reaction, 2.0, 2.0)
    brackets = system_brackets(system_problem, (1.0, 0.5))
    (u, v), trace = iterate_system(system_problem, brackets, max_outer=500, M=10.0)
    assert trace.converged and trace.residual_ok
    assert not trace.spurious
    assert not any(r['clamp_active'] for r in trace.records[-2:])
    assert all(r['margin_grad'] >= 0 for r in trace.records)
    assert np.allclose(u.values, np.pi, atol=1e-5)
    assert np.allclose(v.values, np.pi / 2, atol=1e-5)


def test_system_trapping_exit(system_problem):
    brackets = system_brackets(system_problem, (1.0, 0.5))
    x = system_problem.grid.coords[:, 0]
    z0 = (system_problem.grid.field(1.0 + 3.0 * x), system_problem.grid.field(0.5 + 1.5 * x))
    with pytest.raises(TrappingExit) as info:
        iterate_system(system_problem, brackets, z0=z0, M=1e-6)
    assert info.value.trace.iterations == 3


def test_system_needs_positive_cap(system_problem):
    brackets = system_brackets(system_problem, (1.0, 0.5))
    with pytest.raises(ValueError):
        iterate_system(system_problem, brackets, M=0.0)


@pytest.mark.parametrize('p', [2.0, 3.0])
def test_gradient_bound_and_scaling_probe(p):
    grid = build_grid((0.0, 1.0), 32)
    spec = OperatorSpec('r_laplacian', p, bc='dirichlet')
    problem = ScalarProblem(grid, spec, None)
    C_cal = calibrate_gradient_constant(problem)
    rhs = FrozenRHS(grid, source=np.ones(grid.n_nodes), active=free_mask(grid, spec))
    report = solve_frozen_scalar(spec, rhs, None, grid.constant(1.0))
    check = gradient_bound_check(report, rhs.sup(report.solution.values), spec, C_cal, rhs=rhs)
    assert check['ok']
    assert check['margin'] >= 0
    assert [probe['t'] for probe in check['probes']] == [2.0, 4.0]
    for probe in check['probes']:
        assert probe['exponent'] == pytest.approx(1.0 / (p - 1), rel=1e-4)


def test_calibration_needs_a_potential_under_neumann(interval):
    problem = ScalarProblem(interval, OperatorSpec('r_laplacian', 2.0, bc='neumann'), None)
    with pytest.raises(ValueError):
        calibrate_gradient_constant(problem)


def test_minimal_selection_probe_keeps_the_lower_solution(interval):
    spec = OperatorSpec('r_laplacian', 2.0, lam=1.0, bc='neumann')
    problem = ScalarProblem(interval, spec, ladder_reaction(2.0, frequency=2.0 * np.pi))
    bracket = Bracket(interval.constant(0.3))
    probe = minimal_selection_probe(problem, bracket, bracket.sub, n_starts=2)
    levels = sorted(float(np.mean(c.values)) for c in probe['candidates'])
    assert levels == pytest.approx([0.5, 1.5], abs=1e-6)
    assert not probe['incomparable']
    assert np.allclose(probe['min_candidate'].values, 0.5, atol=1e-6)
