"""Spatial discretization: grids, quadrature, kinetic operator, interactions.

Everything downstream lives on a uniform tensor grid over the box
``[-L, L]^d`` with either Dirichlet (endpoints included, fields vanish
beyond the box) or periodic boundaries.  A *field* is the vector of point
values ``f_i``; a *kernel* is the matrix of point values ``A_ij``.  The
quadrature weights ``w_i`` define all integrals — see :mod:`paircond.kernels`
for the induced operator algebra.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

DIRICHLET = "dirichlet"
PERIODIC = "periodic"


@dataclass
class Grid:
    """Uniform tensor-product grid with quadrature weights.

    Immutable after construction (arrays are marked read-only).

    Attributes
    ----------
    dim : int
        Spatial dimension, 1, 2 or 3.
    extent : float
        Half-width L of the box [-L, L]^d.
    points_per_axis : int
        Nodes per axis; total node count is ``points_per_axis**dim``.
    boundary : str
        ``"dirichlet"`` or ``"periodic"``.
    nodes : ndarray, shape (n, dim)
        Node coordinates, row-major over axes.
    weights : ndarray, shape (n,)
        Strictly positive quadrature weights; ``sum(weights)`` is the box
        volume (exactly for trapezoid/uniform rules used here).
    """

    dim: int
    extent: float
    points_per_axis: int
    boundary: str
    nodes: np.ndarray
    weights: np.ndarray
    axis_nodes: np.ndarray = field(repr=False)
    spacing: float = 0.0

    def __post_init__(self):
        for arr in (self.nodes, self.weights, self.axis_nodes):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    def torus_displacement(self, xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
        """Componentwise displacement xi - xj, minimum-image for periodic grids."""
        d = xi - xj
        if self.boundary == PERIODIC:
            span = 2.0 * self.extent
            d = (d + self.extent) % span - self.extent
        return d


def build_grid(dim: int, extent: float, points_per_axis: int, boundary: str = DIRICHLET) -> Grid:
    """Build a uniform grid with trapezoid (Dirichlet) or uniform (periodic) weights.

    Parameters
    ----------
    dim : int
        1, 2 or 3.
    extent : float
        Half-width L > 0.
    points_per_axis : int
        At least 4 (differential operators are meaningless below that).
    boundary : str
        ``"dirichlet"`` nodes include the endpoints -L and L and carry
        half-weight there; ``"periodic"`` nodes are ``-L + j*h`` with
        ``h = 2L/n`` and uniform weights.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if points_per_axis < 4:
        raise ValueError(f"points_per_axis must be >= 4, got {points_per_axis}")
    if not extent > 0:
        raise ValueError(f"extent must be positive, got {extent}")
    if boundary not in (DIRICHLET, PERIODIC):
        raise ValueError(f"boundary must be '{DIRICHLET}' or '{PERIODIC}', got {boundary!r}")

    n_ax = points_per_axis
    L = float(extent)
    if boundary == DIRICHLET:
        x1 = np.linspace(-L, L, n_ax)
        h = 2.0 * L / (n_ax - 1)
        w1 = np.full(n_ax, h)
        w1[0] = w1[-1] = 0.5 * h
    else:
        h = 2.0 * L / n_ax
        x1 = -L + h * np.arange(n_ax)
        w1 = np.full(n_ax, h)

    axes = np.meshgrid(*([x1] * dim), indexing="ij")
    nodes = np.stack([a.ravel() for a in axes], axis=1)
    w = w1.copy()
    for _ in range(dim - 1):
        w = np.multiply.outer(w, w1).ravel()

    return Grid(dim=dim, extent=L, points_per_axis=n_ax, boundary=boundary,
                nodes=nodes, weights=w, axis_nodes=x1, spacing=h)


def _laplacian_1d(n: int, h: float, boundary: str) -> np.ndarray:
    """Plain second-difference matrix for -d^2/dx^2 (ghost values 0 for Dirichlet)."""
    m = np.zeros((n, n))
    idx = np.arange(n)
    m[idx, idx] = 2.0
    m[idx[:-1], idx[1:]] = -1.0
    m[idx[1:], idx[:-1]] = -1.0
    if boundary == PERIODIC:
        m[0, -1] += -1.0
        m[-1, 0] += -1.0
    return m / h**2


def _kron_sum_1d(grid: Grid, m1: np.ndarray) -> np.ndarray:
    """Sum of per-axis copies of m1 acting on the flattened tensor grid."""
    n_ax = grid.points_per_axis
    eye = np.eye(n_ax)
    total = np.zeros((grid.n, grid.n))
    for axis in range(grid.dim):
        factors = [m1 if a == axis else eye for a in range(grid.dim)]
        term = factors[0]
        for f in factors[1:]:
            term = np.kron(term, f)
        total += term
    return total


def kinetic_operator(grid: Grid) -> np.ndarray:
    """Discrete -Laplacian as a point-value kernel, symmetric under the weighted form.

    Second-order central differences with periodic wrap or Dirichlet ghost
    zeros.  Returned as ``A = (W^-1 M + M W^-1)/2`` so that the point-value
    matrix is exactly symmetric; this equals the plain stencil divided by
    the uniform weight except on Dirichlet boundary rows, where fields of
    interest vanish anyway.
    """
    m = _kron_sum_1d(grid, _laplacian_1d(grid.points_per_axis, grid.spacing, grid.boundary))
    inv_w = 1.0 / grid.weights
    return 0.5 * (inv_w[:, None] * m + m * inv_w[None, :])


def fd_laplacian_symbol(grid: Grid, p) -> np.ndarray:
    """Plane-wave eigenvalue of the periodic second-difference -Laplacian at momentum p."""
    h = grid.spacing
    return (2.0 - 2.0 * np.cos(np.asarray(p, dtype=float) * h)) / h**2


@dataclass
class Potentials:
    """Trap potential and scaled pair interaction.

    The interaction is ``v_N(x) = N^{d*beta} * v(N^beta * x)`` where
    ``v = g * (unit-mass radial profile)``; the default profile is a unit-mass
    Gaussian of width ``sigma``, whose Fourier transform is nonnegative as the
    admissibility assumptions require.
    """

    v_trap: np.ndarray
    g: float
    beta: float
    n_particles: int
    profile: str = "gaussian"
    sigma: float = 1.0
    table_r: np.ndarray | None = None
    table_v: np.ndarray | None = None

    def __post_init__(self):
        self.v_trap = np.asarray(self.v_trap, dtype=float)
        if np.any(self.v_trap < 0):
            raise ValueError("trap potential must be nonnegative")
        if self.g < 0:
            raise ValueError(f"coupling g must be nonnegative, got {self.g}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")
        if self.profile not in ("gaussian", "table"):
            raise ValueError(f"unknown interaction profile {self.profile!r}")
        if self.profile == "table" and (self.table_r is None or self.table_v is None):
            raise ValueError("table profile requires table_r and table_v")

    def base_profile(self, r: np.ndarray, dim: int) -> np.ndarray:
        """Unit-mass radial profile v/g evaluated at radii r."""
        if self.profile == "gaussian":
            s2 = self.sigma**2
            return np.exp(-r**2 / (2.0 * s2)) / (2.0 * np.pi * s2) ** (dim / 2.0)
        return np.interp(r, self.table_r, self.table_v, right=0.0)


def harmonic_trap(grid: Grid) -> np.ndarray:
    """The prototypical trap |x|^2 sampled on the grid."""
    return np.sum(grid.nodes**2, axis=1)


def build_interaction(grid: Grid, pots: Potentials) -> np.ndarray:
    """Interaction kernel v_N(x_i - x_j) with mean-field (N, beta) scaling.

    Distances are minimum-image on periodic grids.  Row masses
    ``sum_j w_j v_N(x_i - x_j)`` approximate g; a warning (not a failure)
    is emitted when ``N^beta * spacing > 1``, i.e. the scaled interaction
    is narrower than the grid resolves.
    """
    scale = float(pots.n_particles) ** pots.beta
    if pots.g == 0.0:
        return np.zeros((grid.n, grid.n))
    if scale * grid.spacing > 1.0:
        warnings.warn(
            f"interaction width 1/N^beta = {1.0/scale:.3g} below grid spacing "
            f"{grid.spacing:.3g}; v_N is unresolved", stacklevel=2)
    disp = grid.torus_displacement(grid.nodes[:, None, :], grid.nodes[None, :, :])
    r = np.sqrt(np.sum(disp**2, axis=-1))
    return pots.g * scale**grid.dim * pots.base_profile(scale * r, grid.dim)


def interaction_symbol(grid: Grid, pots: Potentials, p: np.ndarray) -> np.ndarray:
    """Continuum Fourier transform of v_N at momenta p (gaussian profile only)."""
    if pots.profile != "gaussian":
        raise ValueError("analytic symbol available for the gaussian profile only")
    scale = float(pots.n_particles) ** pots.beta
    p = np.asarray(p, dtype=float)
    return pots.g * np.exp(-(pots.sigma**2) * p**2 / (2.0 * scale**2))


def interaction_symbol_lattice(grid: Grid, pots: Potentials, p: np.ndarray) -> np.ndarray:
    """Quadrature Fourier transform of the sampled v_N at lattice momenta p.

    This is the exact plane-wave eigenvalue of the discrete convolution
    ``f -> sum_j w_j v_N(x_i - x_j) f_j`` on a periodic grid, which is what
    lattice-exact dispersion checks must use.
    """
    if grid.dim != 1:
        raise ValueError("lattice symbol implemented for d=1")
    vn = build_interaction(grid, pots)
    row = vn[0]
    z = grid.torus_displacement(grid.nodes[0], grid.nodes)[:, 0]
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.array([np.sum(grid.weights * row * np.cos(pk * z)) for pk in p])
    return out if out.size > 1 else out[0]
