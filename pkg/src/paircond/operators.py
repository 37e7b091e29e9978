"""Self-consistent operators H[phi,k;mu], H0, Theta[phi,k] and the gap margin.

H collects five channels: single-particle (kinetic + trap - mu), condensate
exchange, condensate direct, pair exchange and pair direct (the last two at
1/N); Theta is the anomalous channel, the interaction times the full pair
function phi(x)phi(y) + m_pair/N.  The gap margin

    c = min over e in (phi)_perp of [ H(e, conj e) - |Theta(conj e, conj e)| ] / ||e||^2

guards every k-step: a positive c certifies that the Riccati minimizer
exists with positive quasiparticle spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as kops
from .errors import HermiticityBroken
from .grid import Grid, Potentials, build_interaction
from .hartree import single_particle_kernel
from .pair_kernel import densities_from_kernel, pair_fraction, _kernel_values

HERMITICITY_TOL = 1e-8


@dataclass
class HTheta:
    """One iterate's operator pair plus the certified gap margin."""

    h: np.ndarray
    h0: np.ndarray
    theta: np.ndarray
    mu_used: float
    gap_margin: float


def assemble_h(phi: np.ndarray, k, mu: float, grid: Grid, pots: Potentials,
               interaction: np.ndarray | None = None,
               pair_weight: float = 1.0) -> np.ndarray:
    """The Hermitian kernel H[phi,k;mu].

    `pair_weight` scales the two 1/N pair channels; the self-consistent
    operators of the iteration use 1, while the variational energy
    evaluates the trace formula with 1/2 (see the energy module).
    """
    if interaction is None:
        interaction = build_interaction(grid, pots)
    kv = _kernel_values(k)

    h = single_particle_kernel(grid, pots) - mu * kops.identity_kernel(grid)
    h = h + interaction * np.outer(phi, np.conj(phi))
    h = h + kops.diag_kernel(grid, kops.convolve(grid, interaction, np.abs(phi) ** 2))
    if np.any(kv):
        frac = pair_fraction(grid, kv)
        w = pair_weight / pots.n_particles
        h = h + w * interaction * frac
        h = h + w * kops.diag_kernel(grid, kops.convolve(grid, interaction,
                                                         np.real(np.diagonal(frac))))
    defect = kops.hermiticity_defect(h)
    if defect >= HERMITICITY_TOL * max(1.0, float(np.max(np.abs(h)))):
        raise HermiticityBroken(defect)
    h = kops.hermitize(h)
    if not (np.iscomplexobj(phi) or np.iscomplexobj(kv)):
        h = h.real
    return h


def assemble_theta(phi: np.ndarray, k, grid: Grid, pots: Potentials,
                   interaction: np.ndarray | None = None,
                   pair_weight: float = 1.0) -> np.ndarray:
    """The symmetric anomalous kernel Theta[phi,k] = v_N . (phi phi + m_pair/N)."""
    if interaction is None:
        interaction = build_interaction(grid, pots)
    kv = _kernel_values(k)
    pair_fn = np.outer(phi, phi)
    if np.any(kv):
        pair_fn = pair_fn + (pair_weight / pots.n_particles) * densities_from_kernel(grid, kv).m_pair
    theta = interaction * pair_fn
    return kops.symmetrize(theta)


def assemble_htheta(phi: np.ndarray, k, mu: float, grid: Grid, pots: Potentials,
                    interaction: np.ndarray | None = None) -> HTheta:
    """Both operators plus the gap margin, as the outer iteration consumes them."""
    if interaction is None:
        interaction = build_interaction(grid, pots)
    h = assemble_h(phi, k, mu, grid, pots, interaction)
    theta = assemble_theta(phi, k, grid, pots, interaction)
    c = gap_margin(grid, h, theta, phi)
    return HTheta(h=h, h0=h + mu * kops.identity_kernel(grid), theta=theta,
                  mu_used=mu, gap_margin=c)


def gap_margin(grid: Grid, h: np.ndarray, theta: np.ndarray, phi: np.ndarray | None) -> float:
    """Worst-case quadratic-form margin on the complement of phi.

    Real symmetric inputs admit the exact value
    min(lam_min(Q(h - theta)Q), lam_min(Q(h + theta)Q)) restricted to
    (phi)_perp; complex inputs fall back to the conservative bound
    lam_min(QhQ) - ||Q theta Q||_op.  A nonpositive return is a legitimate
    diagnostic, not an error.
    """
    hw = kops.to_weighted(grid, h)
    tw = kops.to_weighted(grid, theta)
    if phi is not None:
        basis = kops.perp_basis_weighted(grid, phi)
        hw = np.conj(basis.T) @ hw @ basis
        tw = np.conj(basis.T) @ tw @ basis
    real_case = all(not np.iscomplexobj(a) or np.max(np.abs(a.imag)) == 0.0
                    for a in (hw, tw))
    if real_case:
        hw, tw = hw.real.astype(float), tw.real.astype(float)
        lo_minus = np.linalg.eigvalsh(0.5 * ((hw - tw) + (hw - tw).T))[0]
        lo_plus = np.linalg.eigvalsh(0.5 * ((hw + tw) + (hw + tw).T))[0]
        return float(min(lo_minus, lo_plus))
    lam = np.linalg.eigvalsh(0.5 * (hw + np.conj(hw.T)))[0]
    return float(lam - np.linalg.norm(tw, ord=2))
