import numpy as np
import pytest

from singular_pde.frozen_solver import FrozenRHS
from singular_pde.grid import build_grid
from singular_pde.operators import (
    OperatorSpec, a_jacobian, a_map, custom_norm, energy_gradient, energy_hessian, free_mask,
    frozen_energy, operator_violations, potential_G,
)
from singular_pde.reactions import ReactionTerm

OPERATORS = [
    OperatorSpec('r_laplacian', 3.0, lam=0.5, beta=1.0, bc='robin'),
    OperatorSpec('r_laplacian', 2.5, lam=1.0, bc='neumann'),
    OperatorSpec('pq_sum', 3.0, q=1.5, bc='dirichlet'),
    OperatorSpec('r_laplacian', 2.0, beta=2.0, bc='robin'),
]


def _random_xi(rng, count, dim):
    directions = rng.normal(size=(count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * rng.uniform(0.1, 3.0, size=(count, 1))


@pytest.mark.parametrize('spec', [OPERATORS[0], OPERATORS[2]])
@pytest.mark.parametrize('dim', [1, 2])
def test_gradient_of_potential_is_a(spec, dim, rng):
    xi = _random_xi(rng, 200, dim)
    h = 1e-6
    numeric = np.zeros_like(xi)
    for i in range(dim):
        step = np.zeros(dim)
        step[i] = h
        numeric[:, i] = (potential_G(xi + step, spec) - potential_G(xi - step, spec)) / (2 * h)
    exact = a_map(xi, spec)
    scale = np.maximum(np.linalg.norm(exact, axis=1), 1.0)
    assert np.max(np.linalg.norm(numeric - exact, axis=1) / scale) < 1e-6


@pytest.mark.parametrize('spec', [OPERATORS[0], OPERATORS[2]])
def test_a_is_strictly_monotone(spec, rng):
    xi, eta = _random_xi(rng, 200, 2), _random_xi(rng, 200, 2)
    products = np.sum((a_map(xi, spec) - a_map(eta, spec)) * (xi - eta), axis=1)
    assert np.all(products > 0)


def test_a_vanishes_at_zero():
    for spec in OPERATORS:
        assert np.allclose(a_map(np.zeros((1, 2)), spec), 0.0)
        assert potential_G(np.zeros((1, 2)), spec)[0] == pytest.approx(0.0)


def test_jacobian_matches_finite_differences(rng):
    spec = OPERATORS[2]
    xi = _random_xi(rng, 20, 2)
    jac = a_jacobian(xi, spec)
    h = 1e-6
    for i in range(2):
        step = np.zeros(2)
        step[i] = h
        column = (a_map(xi + step, spec) - a_map(xi - step, spec)) / (2 * h)
        assert np.allclose(jac[:, :, i], column, rtol=1e-5, atol=1e-6)


def _rhs(grid, spec):
    terms = (ReactionTerm('growth', 0.5, s_exp=1.0), ReactionTerm('convective', 1.0, 'x'))
    factors = [np.ones(grid.n_nodes), grid.coords[:, 0]]
    load = np.zeros(grid.n_nodes)
    if spec.bc != 'dirichlet':
        load[grid.boundary_nodes] = 0.3
    return FrozenRHS(grid, terms, factors, source=np.cos(grid.coords[:, 0]),
                     active=free_mask(grid, spec), boundary_load=load)


@pytest.mark.parametrize('spec', OPERATORS, ids=lambda s: f'{s.kind}-{s.bc}-p{s.p:g}')
def test_energy_gradient_matches_central_differences(spec, rng):
    grid = build_grid((0.0, 1.0), 12)
    rhs = _rhs(grid, spec)
    u = grid.field(1.0 + rng.uniform(-0.5, 0.5, grid.n_nodes))
    grad = energy_gradient(u, rhs, spec).values
    h = 1e-6
    for node in np.flatnonzero(free_mask(grid, spec)):
        plus, minus = u.values.copy(), u.values.copy()
        plus[node] += h
        minus[node] -= h
        numeric = (frozen_energy(u.with_values(plus), rhs, spec)
                   - frozen_energy(u.with_values(minus), rhs, spec)) / (2 * h)
        assert abs(numeric - grad[node]) <= 1e-6 * max(1.0, abs(grad[node]))


def test_energy_gradient_in_2d(square, rng):
    spec = OperatorSpec('r_laplacian', 2.5, lam=1.0, beta=1.0, bc='robin')
    rhs = _rhs(square, spec)
    u = square.field(1.0 + rng.uniform(-0.3, 0.3, square.n_nodes))
    grad = energy_gradient(u, rhs, spec).values
    h = 1e-6
    for node in range(0, square.n_nodes, 5):
        plus, minus = u.values.copy(), u.values.copy()
        plus[node] += h
        minus[node] -= h
        numeric = (frozen_energy(u.with_values(plus), rhs, spec)
                   - frozen_energy(u.with_values(minus), rhs, spec)) / (2 * h)
        assert abs(numeric - grad[node]) <= 1e-6 * max(1.0, abs(grad[node]))


def test_hessian_matches_gradient_differences(rng):
    spec = OPERATORS[0]
    grid = build_grid((0.0, 1.0), 8)
    rhs = _rhs(grid, spec)
    u = grid.field(1.0 + rng.uniform(-0.5, 0.5, grid.n_nodes))
    hess = energy_hessian(u, rhs, spec).toarray()
    h = 1e-6
    for node in range(grid.n_nodes):
        plus, minus = u.values.copy(), u.values.copy()
        plus[node] += h
        minus[node] -= h
        column = (energy_gradient(u.with_values(plus), rhs, spec).values
                  - energy_gradient(u.with_values(minus), rhs, spec).values) / (2 * h)
        assert np.allclose(hess[:, node], column, rtol=1e-5, atol=1e-6)


def test_dirichlet_nodes_carry_no_residual(interval):
    spec = OPERATORS[2]
    rhs = _rhs(interval, spec)
    grad = energy_gradient(interval.constant(1.0), rhs, spec).values
    assert np.all(grad[interval.boundary_nodes] == 0.0)


def test_custom_norm_is_homogeneous(interval):
    spec = OPERATORS[0]
    u = interval.field(np.sin(np.pi * interval.coords[:, 0]) + 0.5)
    assert custom_norm(u.with_values(2.0 * u.values), spec) == pytest.approx(2.0 * custom_norm(u, spec))
    assert custom_norm(interval.constant(0.0), spec) == 0.0


@pytest.mark.parametrize('t', [0.25, 0.5, 0.9, 1.0])
def test_pq_norm_lies_between_its_homogeneities(interval, t):
    spec = OperatorSpec('pq_sum', 3.0, q=2.5, beta=1.0, bc='robin')
    u = interval.field(np.sin(np.pi * interval.coords[:, 0]) + 0.5)
    norm, scaled = custom_norm(u, spec), custom_norm(u.with_values(t * u.values), spec)
    # ||tu||^p sits between t^p ||u||^p and t^q ||u||^p
    assert scaled ** 3 >= t ** 3 * norm ** 3 * (1 - 1e-12)
    assert scaled ** 3 <= t ** 2.5 * norm ** 3 * (1 + 1e-12)
    if t < 1:
        assert scaled > t * norm


@pytest.mark.parametrize('kwargs, message', [
    (dict(kind='r_laplacian', p=0.5), 'p must exceed 1'),
    (dict(kind='pq_sum', p=2.0, q=2.5), 'q must lie in (1, p)'),
    (dict(kind='r_laplacian', p=2.0, lam=0.0, beta=0.0, bc='robin'), 'lambda + beta'),
    (dict(kind='r_laplacian', p=2.0, bc='periodic'), 'bc must be one of'),
])
def test_operator_violations(kwargs, message):
    assert any(message in p for p in operator_violations(**kwargs))
    with pytest.raises(ValueError):
        OperatorSpec(**kwargs)
