"""Quadrature-aware algebra of fields and two-point kernels.

Conventions (fixed package-wide):

* inner product         ``<f, g> = sum_i w_i conj(f_i) g_i``
* kernel action         ``(A f)_i = sum_j w_j A_ij f_j``
* composition           ``(A o B)_ij = sum_m w_m A_im B_mj``
* trace                 ``tr A = sum_i w_i A_ii``
* identity kernel       ``delta_ij = diag(1/w_i)``

The *weighted frame* of a kernel is ``S A S`` with ``S = diag(sqrt(w))``;
there, composition is the plain matrix product, the identity kernel is the
identity matrix, the Hilbert-Schmidt norm is the Frobenius norm and the
operator norm is the largest singular value.  The conversion is exact and
round-trips, so most routines convert once, work with matrices, and convert
back.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid


def inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> complex:
    """Weighted inner product <f, g> (conjugate-linear in f)."""
    return np.sum(grid.weights * np.conj(f) * g)


def field_norm(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(np.real(inner(grid, f, f))))


def normalize(grid: Grid, f: np.ndarray) -> np.ndarray:
    return f / field_norm(grid, f)


def apply_kernel(grid: Grid, a: np.ndarray, f: np.ndarray) -> np.ndarray:
    return a @ (grid.weights * f)


def compose(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ (grid.weights[:, None] * b)


def ktrace(grid: Grid, a: np.ndarray) -> complex:
    return np.sum(grid.weights * np.diagonal(a))


def identity_kernel(grid: Grid) -> np.ndarray:
    return np.diag(1.0 / grid.weights)


def diag_kernel(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Multiplication operator by the field `values` as a kernel."""
    return np.diag(values / grid.weights)


def outer_kernel(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Rank-one kernel f(x) g(y) (no conjugation; conjugate g yourself for f><g|)."""
    return np.outer(f, g)


def to_weighted(grid: Grid, a: np.ndarray) -> np.ndarray:
    s = np.sqrt(grid.weights)
    return a * np.outer(s, s)


def from_weighted(grid: Grid, aw: np.ndarray) -> np.ndarray:
    s = np.sqrt(grid.weights)
    return aw / np.outer(s, s)


def field_to_weighted(grid: Grid, f: np.ndarray) -> np.ndarray:
    return np.sqrt(grid.weights) * f


def field_from_weighted(grid: Grid, fw: np.ndarray) -> np.ndarray:
    return fw / np.sqrt(grid.weights)


def hs_norm(grid: Grid, a: np.ndarray) -> float:
    """Hilbert-Schmidt norm (Frobenius norm of the weighted frame)."""
    return float(np.linalg.norm(to_weighted(grid, a)))


def op_norm(grid: Grid, a: np.ndarray) -> float:
    """Operator norm (largest singular value in the weighted frame)."""
    return float(np.linalg.norm(to_weighted(grid, a), ord=2))


def kernel_transpose(a: np.ndarray) -> np.ndarray:
    return a.T


def kernel_adjoint(a: np.ndarray) -> np.ndarray:
    return np.conj(a.T)


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(a.T))


def symmetry_defect(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.T)))


def hermiticity_defect(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - np.conj(a.T))))


def convolve(grid: Grid, interaction: np.ndarray, density: np.ndarray) -> np.ndarray:
    """(v * rho)(x_i) = sum_j w_j v(x_i - x_j) rho_j for a point-value interaction matrix."""
    return interaction @ (grid.weights * density)


def double_quadrature(grid: Grid, a: np.ndarray, b: np.ndarray) -> complex:
    """Entrywise double integral  sum_ij w_i w_j a_ij b_ij."""
    w = grid.weights
    return np.sum((w[:, None] * w[None, :]) * a * b)


def solve_kernel(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kernel X with A o X = B (dense solve in the weighted frame)."""
    aw, bw = to_weighted(grid, a), to_weighted(grid, b)
    return from_weighted(grid, np.linalg.solve(aw, bw))


def projector_offcondensate(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Kernel of Q = delta - phi >< phi| projecting onto the complement of phi."""
    return identity_kernel(grid) - np.outer(phi, np.conj(phi))


def perp_basis_weighted(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns, weighted frame) of the complement of phi.

    Built from the Householder reflector mapping e_1 to the weighted phi, so
    the basis is deterministic and exactly orthonormal.
    """
    pw = field_to_weighted(grid, phi)
    pw = pw / np.linalg.norm(pw)
    n = pw.size
    v = pw.astype(complex).copy()
    # reflector H = I - 2 vv^H / |v|^2 with H e1 = phase * pw
    alpha = v[0]
    phase = alpha / abs(alpha) if abs(alpha) > 0 else 1.0
    v[0] += phase
    v /= np.linalg.norm(v)
    h = np.eye(n, dtype=complex) - 2.0 * np.outer(v, np.conj(v))
    basis = h[:, 1:]
    if np.max(np.abs(basis.imag)) == 0.0:
        basis = basis.real
    return basis
