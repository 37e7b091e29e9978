"""Analytic first variations of the energy functionals, real-field mode.

The psi-coordinate functional is a sum of Frobenius pairings between fixed
kernels and spectral functions of the symmetric matrix psi (weighted frame),
so its exact gradient follows from the Daleckii-Krein form of the Frechet
derivative: conjugate the perturbation into the eigenbasis, multiply by the
divided-difference table of the scalar function, conjugate back.  The same
map chains the k-gradient of the total energy through psi = k (1 - k^2)^(-1/2).

All gradients here use weighted coordinates with the single convention

    d/dt E(x + t eta) | t=0  =  <eta, g>

under the plain (dot / Frobenius) pairing, for field and kernel arguments
alike; the finite-difference harness checks exactly this.
"""

from __future__ import annotations

import numpy as np

from . import kernels as kops
from .grid import Grid, Potentials, build_interaction
from .hartree import single_particle_kernel


def divided_difference(f, fprime, lam: np.ndarray) -> np.ndarray:
    """Table f[1](lam_a, lam_b) with the diagonal limit f'(lam_a)."""
    la = lam[:, None]
    lb = lam[None, :]
    diff = la - lb
    small = np.abs(diff) < 1e-12 * np.maximum(1.0, np.abs(la) + np.abs(lb))
    num = f(la) - f(lb)
    table = np.where(small, fprime(0.5 * (la + lb)), num / np.where(small, 1.0, diff))
    return table


def dk_adjoint(x_sym: np.ndarray, f, fprime, gradient: np.ndarray) -> np.ndarray:
    """Adjoint Frechet map  G -> V [ f[1] o (V^T G V) ] V^T  for symmetric x."""
    lam, vecs = np.linalg.eigh(0.5 * (x_sym + x_sym.T))
    table = divided_difference(f, fprime, lam)
    inner = vecs.T @ gradient @ vecs
    return vecs @ (table * inner) @ vecs.T


def _f_mpair(lam):
    return lam * np.sqrt(1.0 + lam**2)


def _f_mpair_prime(lam):
    return np.sqrt(1.0 + lam**2) + lam**2 / np.sqrt(1.0 + lam**2)


def _f_psi_of_k(lam):
    return lam / np.sqrt(1.0 - lam**2)


def _f_psi_of_k_prime(lam):
    return (1.0 - lam**2) ** (-1.5)


def psi_form_gradients(phi: np.ndarray, psi: np.ndarray, grid: Grid, pots: Potentials,
                       interaction: np.ndarray | None = None):
    """(g_phi, g_psi) of the six-line psi functional, weighted coordinates, real fields."""
    if interaction is None:
        interaction = build_interaction(grid, pots)
    n_part = pots.n_particles
    w = grid.weights
    phi_w = kops.field_to_weighted(grid, phi).astype(float)
    psi_w = kops.to_weighted(grid, np.asarray(psi, dtype=float))
    sp_w = kops.to_weighted(grid, single_particle_kernel(grid, pots))

    m_pair_w = _spectral(psi_w, _f_mpair)
    big_m = np.outer(phi_w, phi_w) + m_pair_w / n_part
    p_w = psi_w @ psi_w
    pdiag = np.diagonal(p_w)
    s_vec = interaction @ phi_w**2
    conv_p = interaction @ pdiag

    # phi gradient: 2N A phi + 2N (v o M) phi + 2 (v o P) phi + 2 phi o (v p)
    g_phi = 2.0 * n_part * (sp_w @ phi_w)
    g_phi = g_phi + 2.0 * n_part * ((interaction * big_m) @ phi_w)
    g_phi = g_phi + 2.0 * ((interaction * p_w) @ phi_w)
    g_phi = g_phi + 2.0 * phi_w * conv_p

    # psi gradient, term by term through the spectral calculus
    g_psi = dk_adjoint(psi_w, _f_mpair, _f_mpair_prime, interaction * big_m)
    g_p = sp_w.copy()
    g_p = g_p + interaction * np.outer(phi_w, phi_w)
    g_p = g_p + np.diag(s_vec)
    g_p = g_p + (interaction * p_w + np.diag(conv_p)) / n_part
    g_psi = g_psi + psi_w @ g_p + g_p @ psi_w
    return g_phi, 0.5 * (g_psi + g_psi.T)


def _spectral(x_sym: np.ndarray, f) -> np.ndarray:
    lam, vecs = np.linalg.eigh(0.5 * (x_sym + x_sym.T))
    return (vecs * f(lam)) @ vecs.T


def total_energy_gradients(phi: np.ndarray, k, grid: Grid, pots: Potentials,
                           interaction: np.ndarray | None = None):
    """(g_phi, g_k) of the total energy in weighted coordinates, real fields.

    The phi gradient is the assembled condensate-equation operator applied to
    phi; the k gradient chains the psi gradient through the spectral map
    psi(k) = k (1 - k^2)^(-1/2).
    """
    from .energy import phi_equation_apply
    from .pair_kernel import _kernel_values, psi_transform

    if interaction is None:
        interaction = build_interaction(grid, pots)
    kv = np.asarray(_kernel_values(k), dtype=float)
    g_phi = 2.0 * kops.field_to_weighted(grid, phi_equation_apply(phi, kv, grid, pots, interaction))

    psi = psi_transform(grid, kv)
    _, g_psi = psi_form_gradients(phi, psi, grid, pots, interaction)
    kw = kops.to_weighted(grid, kv)
    g_k = dk_adjoint(kw, _f_psi_of_k, _f_psi_of_k_prime, g_psi) / pots.n_particles
    return g_phi, g_k


def trace_energy_gradient(grid: Grid, k, h0: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Gradient of the trace formula at frozen operators, weighted coordinates, real case."""
    kw = kops.to_weighted(grid, np.asarray(k, dtype=float))
    hw = kops.to_weighted(grid, np.asarray(h0, dtype=float))
    tw = kops.to_weighted(grid, np.asarray(theta, dtype=float))
    n = kw.shape[0]
    r = np.linalg.solve(np.eye(n) - kw @ kw, np.eye(n))
    a = kw @ hw @ kw
    kt_tk = kw @ tw + tw @ kw
    g = kw @ r @ a @ r + r @ a @ r @ kw
    g = g + hw @ kw @ r + r @ kw @ hw
    g = g + 0.5 * (kw @ r @ kt_tk @ r + r @ kt_tk @ r @ kw)
    g = g + 0.5 * (tw @ r + r @ tw)
    return 0.5 * (g + g.T)
