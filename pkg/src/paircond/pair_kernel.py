"""Pair-excitation kernel algebra.

The pair kernel k is a symmetric two-point function with operator norm
below one mapping the complement of the condensate into itself.  All the
nonlinearity of the coupled system enters through rational functions of k:

    m_pair = k o (delta - conj(k) o k)^-1          (anomalous correlation)
    n_pair = (k o conj(k)) o (delta - conj(k) o k)^-1   (normal correlation)
    rho_pair(x) = n_pair(x, x)                     (excited density)

and the square-root change of variables psi = k o (delta - conj(k) o k)^-1/2
used by the direct minimization backend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as kops
from .errors import OpNormExceeded
from .grid import Grid

SYMMETRY_TOL = 1e-10
ORTHO_TOL = 1e-8


@dataclass
class PairKernel:
    """Admissible pair kernel: symmetric, contractive, off-condensate.

    Construct via :func:`project_offcondensate` (or :func:`admit` when the
    raw kernel is already expected to satisfy the invariants).
    """

    values: np.ndarray
    op_norm: float
    attached_phi: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


def admit(grid: Grid, values: np.ndarray, phi: np.ndarray | None = None,
          check: bool = True) -> PairKernel:
    """Wrap raw values as a PairKernel, verifying the invariants.

    Raises OpNormExceeded when the operator norm is >= 1; symmetry and
    orthogonality violations raise ValueError since they signal a bug in
    the producing code rather than a physical regime change.
    """
    values = np.asarray(values)
    nrm = kops.op_norm(grid, values)
    if check:
        if kops.symmetry_defect(values) > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(values)))):
            raise ValueError("pair kernel is not symmetric")
        if phi is not None:
            drift = offcondensate_drift(grid, values, phi)
            if drift > ORTHO_TOL:
                raise ValueError(f"pair kernel leaks onto the condensate (norm {drift:.3e})")
        if nrm >= 1.0:
            raise OpNormExceeded(nrm)
    return PairKernel(values=values, op_norm=nrm, attached_phi=phi)


def zero_kernel(grid: Grid, phi: np.ndarray | None = None) -> PairKernel:
    return PairKernel(values=np.zeros((grid.n, grid.n)), op_norm=0.0, attached_phi=phi)


def offcondensate_drift(grid: Grid, k: np.ndarray, phi: np.ndarray) -> float:
    """max(||k o phi||, ||phi o k||), the leakage onto the condensate."""
    right = kops.field_norm(grid, kops.apply_kernel(grid, k, phi))
    left = kops.field_norm(grid, kops.apply_kernel(grid, k.T, phi))
    return max(right, left)


def project_offcondensate(grid: Grid, k_raw: np.ndarray, phi: np.ndarray) -> PairKernel:
    """Symmetrize and project a raw kernel onto the complement of phi.

    Computes conj(Q) o sym(k_raw) o Q with Q = delta - phi >< conj(phi);
    for real phi this is the familiar two-sided projection, and for complex
    phi the conjugated left factor is what preserves kernel symmetry.  The
    result satisfies symmetry and orthogonality to machine precision; the
    contraction invariant is checked and OpNormExceeded raised on failure.
    """
    q = kops.projector_offcondensate(grid, phi)
    sym = kops.symmetrize(np.asarray(k_raw))
    proj = kops.compose(grid, kops.compose(grid, np.conj(q), sym), q)
    proj = kops.symmetrize(proj)
    if not np.iscomplexobj(k_raw) and not np.iscomplexobj(phi):
        proj = proj.real
    return admit(grid, proj, phi=phi, check=True)


def _require_contractive(grid: Grid, k: np.ndarray) -> None:
    nrm = kops.op_norm(grid, k)
    if nrm >= 1.0:
        raise OpNormExceeded(nrm)


def _kernel_values(k) -> np.ndarray:
    return k.values if isinstance(k, PairKernel) else np.asarray(k)


def resolvent(grid: Grid, k) -> np.ndarray:
    """(delta - k o conj(k))^-1, with the defining identity re-verified."""
    kv = _kernel_values(k)
    _require_contractive(grid, kv)
    kw = kops.to_weighted(grid, kv)
    a = np.eye(kw.shape[0]) - kw @ np.conj(kw)
    rw = np.linalg.solve(a, np.eye(kw.shape[0]))
    defect = np.max(np.abs(a @ rw - np.eye(kw.shape[0])))
    if defect > 1e-10:
        raise ArithmeticError(f"resolvent verification failed (defect {defect:.3e})")
    return kops.from_weighted(grid, rw)


@dataclass
class Densities:
    """Non-condensate correlation kernels and the excited density."""

    rho_pair: np.ndarray
    n_pair: np.ndarray
    m_pair: np.ndarray

    def l1_norm(self, grid: Grid) -> float:
        return float(np.sum(grid.weights * np.abs(self.rho_pair)))

    def l3_norm(self, grid: Grid) -> float:
        return float(np.sum(grid.weights * np.abs(self.rho_pair) ** 3) ** (1.0 / 3.0))


def densities_from_kernel(grid: Grid, k) -> Densities:
    """m_pair, n_pair and rho_pair as rational functions of k.

    m_pair = k o (delta - conj(k) o k)^-1 (the expression entering the
    anomalous channel of the self-consistent operators); n_pair is
    Hermitized after assembly with the pre-Hermitization defect asserted
    small, which is exact for the real kernels the solver produces.
    """
    kv = _kernel_values(k)
    _require_contractive(grid, kv)
    kw = kops.to_weighted(grid, kv)
    n = kw.shape[0]
    r_right = np.linalg.solve(np.eye(n) - np.conj(kw) @ kw, np.eye(n))
    m_w = kw @ r_right
    n_w = (kw @ np.conj(kw)) @ r_right
    defect = np.max(np.abs(n_w - np.conj(n_w.T)))
    if defect > 1e-10 * max(1.0, float(np.max(np.abs(n_w)))):
        raise ArithmeticError(f"n_pair lost Hermiticity (defect {defect:.3e})")
    n_w = 0.5 * (n_w + np.conj(n_w.T))
    m_pair = kops.from_weighted(grid, kops.symmetrize(m_w))
    n_pair = kops.from_weighted(grid, n_w)
    rho = np.real(np.diagonal(n_pair)).copy()
    return Densities(rho_pair=rho, n_pair=n_pair, m_pair=m_pair)


def pair_fraction(grid: Grid, k) -> np.ndarray:
    """The Hermitian fraction (k o conj(k)) o (delta - k o conj(k))^-1 of the H assembly."""
    kv = _kernel_values(k)
    _require_contractive(grid, kv)
    kw = kops.to_weighted(grid, kv)
    n = kw.shape[0]
    kk = kw @ np.conj(kw)
    frac = np.linalg.solve(np.eye(n) - kk, kk)
    return kops.from_weighted(grid, 0.5 * (frac + np.conj(frac.T)))


def _sym_matrix_function(m: np.ndarray, f) -> np.ndarray:
    """f applied spectrally to a Hermitian weighted-frame matrix."""
    vals, vecs = np.linalg.eigh(0.5 * (m + np.conj(m.T)))
    return (vecs * f(vals)) @ np.conj(vecs.T)


def psi_transform(grid: Grid, k) -> np.ndarray:
    """psi = k o (delta - conj(k) o k)^-1/2 (symmetric square root in the weighted frame)."""
    kv = _kernel_values(k)
    _require_contractive(grid, kv)
    kw = kops.to_weighted(grid, kv)
    root = _sym_matrix_function(np.eye(kw.shape[0]) - np.conj(kw) @ kw,
                                lambda lam: 1.0 / np.sqrt(lam))
    return kops.from_weighted(grid, kw @ root)


def psi_inverse(grid: Grid, psi: np.ndarray, phi: np.ndarray | None = None) -> PairKernel:
    """Recover k = psi o (delta + conj(psi) o psi)^-1/2; always admissible."""
    pw = kops.to_weighted(grid, np.asarray(psi))
    root = _sym_matrix_function(np.eye(pw.shape[0]) + np.conj(pw) @ pw,
                                lambda lam: 1.0 / np.sqrt(lam))
    kv = kops.from_weighted(grid, pw @ root)
    kv = kops.symmetrize(kv)
    return admit(grid, kv, phi=phi, check=phi is not None)
