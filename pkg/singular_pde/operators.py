"""
The quasilinear operator a(ξ) = a0(|ξ|) ξ, its potential G, the discrete
energy of the frozen problems and its exact gradient and Hessian.

Two kinds are supported: the pure r-Laplacian (a0(t) = t^(p-2)) and the
(p,q)-sum (a0(t) = t^(p-2) + t^(q-2)). Exponents below 2 are regularized
with EPS_GRAD inside a0 so that a(0) = 0 stays well defined.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .config.settings import BOUNDARY_KINDS, EPS_GRAD, OPERATOR_KINDS
from .errors import NonFiniteEnergy
from .grid import cell_gradient

logger = logging.getLogger(__name__)


def operator_violations(kind, p, q=None, lam=0.0, beta=0.0, bc='robin'):
    """List every violated OperatorSpec invariant (empty when valid)."""
    problems = []
    if kind not in OPERATOR_KINDS:
        problems.append(f'kind must be one of {OPERATOR_KINDS}, got {kind!r}')
    if bc not in BOUNDARY_KINDS:
        problems.append(f'bc must be one of {BOUNDARY_KINDS}, got {bc!r}')
    if not (p > 1 and np.isfinite(p)):
        problems.append('p must exceed 1')
    if kind == 'pq_sum':
        if q is None or not (1 < q < p):
            problems.append('q must lie in (1, p) for the (p,q)-sum')
    if lam < 0:
        problems.append('lambda must be nonnegative')
    if beta < 0:
        problems.append('beta must be nonnegative')
    if bc == 'robin' and not lam + beta > 0:
        problems.append('lambda + beta must be positive for Robin problems')
    return problems


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    p: float
    q: float = None
    lam: float = 0.0
    beta: float = 0.0
    bc: str = 'robin'

    def __post_init__(self):
        problems = operator_violations(self.kind, self.p, self.q, self.lam, self.beta, self.bc)
        if problems:
            raise ValueError('; '.join(problems))

    @property
    def exponents(self):
        if self.kind == 'pq_sum':
            return (self.p, self.q)
        return (self.p,)

    def with_potential(self, lam):
        return OperatorSpec(self.kind, self.p, self.q, lam, self.beta, self.bc)


def _rho(r, e):
    """|ξ| as seen by the e-th power of a0 (regularized when e < 2)."""
    if e < 2:
        return np.sqrt(r * r + EPS_GRAD * EPS_GRAD)
    return r


def a_map(xi, spec):
    """a(ξ) = a0(|ξ|) ξ; returns 0 at ξ = 0. Works row-wise on (..., N) arrays."""
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi, axis=-1)
    a0 = sum(_rho(r, e) ** (e - 2) for e in spec.exponents)
    return a0[..., None] * xi


def potential_G(xi, spec):
    """G(ξ) = ∫_0^|ξ| τ a0(τ) dτ, consistent with a_map so that ∇G = a."""
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi, axis=-1)
    total = 0.0
    for e in spec.exponents:
        if e < 2:
            total = total + (_rho(r, e) ** e - EPS_GRAD ** e) / e
        else:
            total = total + r ** e / e
    return total


def a_jacobian(xi, spec):
    """Da(ξ) per row, shape (n, N, N)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    n, dim = xi.shape
    r = np.linalg.norm(xi, axis=1)
    jac = np.zeros((n, dim, dim))
    eye = np.eye(dim)
    for e in spec.exponents:
        rho = _rho(r, e)
        safe = np.where(rho > 0, rho, 1.0)
        unit = np.where(rho[:, None] > 0, xi / safe[:, None], 0.0)
        scale = np.where(rho > 0, safe ** (e - 2), 0.0 if e > 2 else 1.0)
        jac += scale[:, None, None] * (eye + (e - 2) * unit[:, :, None] * unit[:, None, :])
    return jac


def _signed_power(v, e):
    return np.sign(v) * np.abs(v) ** e


def free_mask(grid, spec):
    """Nodes carrying unknowns; Dirichlet eliminates the boundary (zero trace)."""
    if spec.bc == 'dirichlet':
        return ~grid.is_boundary
    return np.ones(grid.n_nodes, dtype=bool)


def custom_norm(u, spec):
    """
    Robin:   (p ∫ G(∇u) + β ∫_∂Ω |u|^p dσ + λ ∫ |u|^p)^(1/p)
    Neumann: (∫ |∇u|^p + ∫ |u|^p)^(1/p)
    Dirichlet uses the gradient part alone (Poincaré).
    """
    grid, p = u.grid, spec.p
    grads = cell_gradient(grid, u.values)
    if spec.bc == 'neumann':
        total = grid.cell_measures @ np.linalg.norm(grads, axis=1) ** p
        total += grid.volumes @ np.abs(u.values) ** p
        return float(total ** (1.0 / p))
    total = p * (grid.cell_measures @ potential_G(grads, spec))
    if spec.bc == 'robin':
        total += spec.beta * (grid.surface_weights @ np.abs(u.values[grid.boundary_nodes]) ** p)
        total += spec.lam * (grid.volumes @ np.abs(u.values) ** p)
    return float(total ** (1.0 / p))


def frozen_energy(u, rhs_env, spec):
    """
    J(u) = ∫ G(∇u) + (β/p) ∫_∂Ω |u|^p dσ + (λ/p) ∫ |u|^p − ∫ H(x, u) − ∫_∂Ω ψ u dσ.

    `rhs_env` supplies H (antiderivative of the truncated frozen right-hand
    side) and the optional boundary load ψ.
    """
    grid, p, v = u.grid, spec.p, u.values
    free = free_mask(grid, spec)
    energy = grid.cell_measures @ potential_G(cell_gradient(grid, v), spec)
    if spec.bc == 'robin' and spec.beta > 0:
        energy += spec.beta / p * (grid.surface_weights @ np.abs(v[grid.boundary_nodes]) ** p)
    if spec.lam > 0:
        energy += spec.lam / p * (grid.volumes[free] @ np.abs(v[free]) ** p)
    energy -= grid.volumes[free] @ rhs_env.antiderivative(v)[free]
    if rhs_env.boundary_load is not None:
        energy -= rhs_env.boundary_load @ v
    if not np.isfinite(energy):
        raise NonFiniteEnergy('frozen energy is not finite (reaction evaluated below its floor?)')
    return float(energy)


def energy_gradient(u, rhs_env, spec):
    """
    Exact gradient of frozen_energy: the discrete weak residual
    ∫ a(∇u)·∇φ_i + β ∫_∂Ω |u|^(p-2) u φ_i + λ ∫ |u|^(p-2) u φ_i − ∫ r φ_i.
    Nonpositive entries mean subsolution. Eliminated nodes carry zero.
    """
    grid, p, v = u.grid, spec.p, u.values
    free = free_mask(grid, spec)
    flux = a_map(cell_gradient(grid, v), spec)
    residual = np.zeros(grid.n_nodes)
    for axis, d in enumerate(grid.cell_gradients):
        residual += d.T @ (grid.cell_measures * flux[:, axis])
    if spec.bc == 'robin' and spec.beta > 0:
        b = grid.boundary_nodes
        residual[b] += spec.beta * grid.surface_weights * _signed_power(v[b], p - 1)
    if spec.lam > 0:
        residual += spec.lam * grid.volumes * _signed_power(v, p - 1)
    residual -= grid.volumes * rhs_env.values(v)
    if rhs_env.boundary_load is not None:
        residual -= rhs_env.boundary_load
    residual[~free] = 0.0
    if not np.all(np.isfinite(residual)):
        raise NonFiniteEnergy('energy gradient is not finite')
    return u.with_values(residual)


def energy_hessian(u, rhs_env, spec):
    """Sparse Hessian of frozen_energy (generalized derivative at truncation kinks)."""
    grid, p, v = u.grid, spec.p, u.values
    grads = cell_gradient(grid, v)
    jac = a_jacobian(grads, spec)
    m = grid.cell_measures
    hess = sp.csr_matrix((grid.n_nodes, grid.n_nodes))
    for i, di in enumerate(grid.cell_gradients):
        for j, dj in enumerate(grid.cell_gradients):
            hess = hess + di.T @ sp.diags(m * jac[:, i, j]) @ dj

    def power_slope(values):
        if p < 2:
            return (p - 1) * (values * values + EPS_GRAD * EPS_GRAD) ** ((p - 2) / 2)
        return (p - 1) * np.abs(values) ** (p - 2)

    diag = np.zeros(grid.n_nodes)
    if spec.bc == 'robin' and spec.beta > 0:
        b = grid.boundary_nodes
        diag[b] += spec.beta * grid.surface_weights * power_slope(v[b])
    if spec.lam > 0:
        diag += spec.lam * grid.volumes * power_slope(v)
    diag -= grid.volumes * rhs_env.derivative(v)
    return (hess + sp.diags(diag)).tocsr()
