"""
Uniform tensor grids on intervals and rectangles.

Nodes carry trapezoidal volume weights; boundary nodes carry surface weights
assembled face by face. Cell gradients (intervals in 1D, a consistent
two-triangle split of every rectangle in 2D) are exposed as sparse matrices
so that energies and their exact gradients can be assembled explicitly.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class BoundaryFace:
    """One flat piece of the boundary: its outward normal, nodes and dσ weights."""
    normal: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class Grid:
    dimension: int
    extent: tuple
    n_cells: tuple
    spacing: tuple
    coords: np.ndarray
    volumes: np.ndarray
    boundary_nodes: np.ndarray
    normals: np.ndarray
    surface_weights: np.ndarray
    distance: np.ndarray
    faces: tuple
    cell_measures: np.ndarray
    cell_gradients: tuple = field(repr=False)

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def shape(self):
        return tuple(n + 1 for n in self.n_cells)

    @property
    def is_boundary(self):
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask

    @property
    def interior_nodes(self):
        return np.flatnonzero(~self.is_boundary)

    @property
    def measure(self):
        return float(np.prod([hi - lo for lo, hi in self.extent]))

    @property
    def boundary_measure(self):
        if self.dimension == 1:
            return 2.0
        (x0, x1), (y0, y1) = self.extent
        return 2.0 * ((x1 - x0) + (y1 - y0))

    def surface_field(self, values):
        """Scatter boundary-node values into a full nodal array (zeros inside)."""
        out = np.zeros(self.n_nodes)
        out[self.boundary_nodes] = values
        return out

    def field(self, values, strictly_positive=False):
        return DiscreteField(self, np.asarray(values, dtype=float), strictly_positive)

    def constant(self, value):
        return self.field(np.full(self.n_nodes, float(value)))


@dataclass(frozen=True, eq=False)
class DiscreteField:
    grid: Grid
    values: np.ndarray
    strictly_positive: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        if values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f'field has {values.size} values, grid has {self.grid.n_nodes} nodes')

    def assert_positive(self):
        """Check the strictly-positive flag lazily; returns self for chaining."""
        if self.strictly_positive and not np.all(self.values > 0):
            raise ValueError(f'field flagged positive has min {self.values.min():g}')
        return self

    def with_values(self, values, strictly_positive=False):
        return DiscreteField(self.grid, values, strictly_positive)

    @property
    def sup(self):
        return float(np.max(np.abs(self.values)))


def _normalize_extent(extent):
    if np.isscalar(extent[0]):
        extent = (tuple(extent),)
    return tuple((float(lo), float(hi)) for lo, hi in extent)


def _trapezoid_weights(n, h):
    w = np.full(n + 1, h)
    w[0] = w[-1] = h / 2.0
    return w


def _interval_operators(n, h):
    rows = np.repeat(np.arange(n), 2)
    cols = np.column_stack([np.arange(n), np.arange(1, n + 1)]).ravel()
    vals = np.tile([-1.0 / h, 1.0 / h], n)
    dx = sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 1))
    return np.full(n, h), (dx,)


def _rectangle_operators(nx, ny, hx, hy):
    def node(i, j):
        return i * (ny + 1) + j

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing='ij')
    ii, jj = ii.ravel(), jj.ravel()
    n00, n10 = node(ii, jj), node(ii + 1, jj)
    n01, n11 = node(ii, jj + 1), node(ii + 1, jj + 1)
    n_rect = ii.size
    lower = np.arange(n_rect)
    upper = lower + n_rect

    # lower triangle (n00, n10, n11), upper triangle (n00, n11, n01)
    x_rows = np.concatenate([lower, lower, upper, upper])
    x_cols = np.concatenate([n10, n00, n11, n01])
    x_vals = np.concatenate([np.full(n_rect, 1 / hx), np.full(n_rect, -1 / hx),
                             np.full(n_rect, 1 / hx), np.full(n_rect, -1 / hx)])
    y_rows = x_rows
    y_cols = np.concatenate([n11, n10, n01, n00])
    y_vals = np.concatenate([np.full(n_rect, 1 / hy), np.full(n_rect, -1 / hy),
                             np.full(n_rect, 1 / hy), np.full(n_rect, -1 / hy)])

    shape = (2 * n_rect, (nx + 1) * (ny + 1))
    dx = sp.csr_matrix((x_vals, (x_rows, x_cols)), shape=shape)
    dy = sp.csr_matrix((y_vals, (y_rows, y_cols)), shape=shape)
    return np.full(2 * n_rect, hx * hy / 2.0), (dx, dy)


def build_grid(extent, n_cells):
    """
    Build a uniform grid on an interval or an axis-aligned rectangle.

    Args:
        extent: (a, b) for an interval, ((x0, x1), (y0, y1)) for a rectangle
        n_cells: cells per axis, an int or one int per axis

    Returns:
        Grid with trapezoidal volume weights, surface weights, normals and
        exact distance to the boundary.
    """
    extent = _normalize_extent(extent)
    dim = len(extent)
    if dim not in (1, 2):
        raise ValueError(f'only 1D and 2D grids are supported, got dimension {dim}')
    if np.isscalar(n_cells):
        n_cells = (int(n_cells),) * dim
    n_cells = tuple(int(n) for n in n_cells)
    if len(n_cells) != dim:
        raise ValueError('n_cells must give one count per axis')
    if min(n_cells) < 2:
        raise ValueError(f'n_cells must be at least 2, got {min(n_cells)}')
    for lo, hi in extent:
        if not hi > lo:
            raise ValueError(f'degenerate extent [{lo}, {hi}]')

    spacing = tuple((hi - lo) / n for (lo, hi), n in zip(extent, n_cells))

    if dim == 1:
        ((a, b),), (n,), (h,) = extent, n_cells, spacing
        x = np.linspace(a, b, n + 1)
        coords = x[:, None]
        volumes = _trapezoid_weights(n, h)
        faces = (
            BoundaryFace(np.array([-1.0]), np.array([0]), np.array([1.0])),
            BoundaryFace(np.array([1.0]), np.array([n]), np.array([1.0])),
        )
        distance = np.minimum(x - a, b - x)
        cell_measures, cell_gradients = _interval_operators(n, h)
    else:
        ((x0, x1), (y0, y1)), (nx, ny), (hx, hy) = extent, n_cells, spacing
        xs, ys = np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing='ij')
        coords = np.column_stack([X.ravel(), Y.ravel()])
        volumes = np.outer(_trapezoid_weights(nx, hx), _trapezoid_weights(ny, hy)).ravel()
        index = np.arange(coords.shape[0]).reshape(nx + 1, ny + 1)
        wx, wy = _trapezoid_weights(nx, hx), _trapezoid_weights(ny, hy)
        faces = (
            BoundaryFace(np.array([-1.0, 0.0]), index[0, :], wy),
            BoundaryFace(np.array([1.0, 0.0]), index[-1, :], wy),
            BoundaryFace(np.array([0.0, -1.0]), index[:, 0], wx),
            BoundaryFace(np.array([0.0, 1.0]), index[:, -1], wx),
        )
        distance = np.minimum.reduce([X - x0, x1 - X, Y - y0, y1 - Y]).ravel()
        cell_measures, cell_gradients = _rectangle_operators(nx, ny, hx, hy)

    n_nodes = coords.shape[0]
    surface = np.zeros(n_nodes)
    normal_sum = np.zeros((n_nodes, dim))
    for face in faces:
        surface[face.nodes] += face.weights
        normal_sum[face.nodes] += face.normal
    boundary_nodes = np.flatnonzero(surface > 0)
    normals = normal_sum[boundary_nodes]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    distance[boundary_nodes] = 0.0

    return Grid(
        dimension=dim,
        extent=extent,
        n_cells=n_cells,
        spacing=spacing,
        coords=coords,
        volumes=volumes,
        boundary_nodes=boundary_nodes,
        normals=normals,
        surface_weights=surface[boundary_nodes],
        distance=distance,
        faces=faces,
        cell_measures=cell_measures,
        cell_gradients=cell_gradients,
    )


def discrete_gradient(u):
    """
    Nodal gradient: central differences inside, second-order one-sided
    differences on the boundary. Exact on affine fields.

    Returns an (n_nodes, dimension) array.
    """
    grid = u.grid
    values = u.values.reshape(grid.shape)
    if grid.dimension == 1:
        return np.gradient(values, grid.spacing[0], edge_order=2)[:, None]
    parts = np.gradient(values, *grid.spacing, edge_order=2)
    return np.column_stack([part.ravel() for part in parts])


def cell_gradient(grid, values):
    """Piecewise-constant gradient per cell, shape (n_cells_total, dimension)."""
    return np.column_stack([d @ values for d in grid.cell_gradients])


def integrate_volume(f):
    """Trapezoidal ∫_Ω f dx; exact for affine integrands."""
    return float(f.grid.volumes @ f.values)


def integrate_surface(f):
    """
    ∫_∂Ω f dσ from the boundary-node values of f (counting measure in 1D).
    """
    return float(f.grid.surface_weights @ f.values[f.grid.boundary_nodes])


def boundary_load(grid, flux):
    """
    Nodal load Σ_faces ∫ ψ φ_i dσ for boundary data ψ(x, n).

    `flux(points, normal)` returns ψ at the face nodes for that face's normal,
    so corner nodes collect one contribution per adjacent face.
    """
    load = np.zeros(grid.n_nodes)
    for face in grid.faces:
        load[face.nodes] += face.weights * flux(grid.coords[face.nodes], face.normal)
    return load
