"""Energy functionals and the chemical potential.

Two equivalent coordinate systems are supported.  In k-coordinates the
pair energy is the operator trace

    E[k; H0, Theta] = tr{ (delta - conj k o k)^-1 o
                          (conj k o H0 o k + 1/2 conj k o Theta + 1/2 conj Theta o k) },

evaluated with the pair channels inside H0 and Theta at half weight so that
the total is the variational functional whose critical points solve the
coupled system (the full self-consistent trace double-counts pair-pair
interactions; it is recorded in the breakdown for reference).  In
psi-coordinates (psi = k (delta - conj k o k)^-1/2) the same functional is
a six-term quadrature expression free of the contraction constraint; the
two evaluations agree identically and the identity is tested.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as kops
from .errors import NonRealTrace
from .grid import Grid, Potentials, build_interaction
from .hartree import hartree_energy, single_particle_kernel, quartic_term
from .operators import assemble_h, assemble_theta
from .pair_kernel import _kernel_values, densities_from_kernel, psi_transform


@dataclass
class EnergyReport:
    e_hartree: float
    e_pair_trace: float
    e_total: float
    mu: float
    psi_form_value: float | None = None
    breakdown: dict = field(default_factory=dict)


def trace_energy(grid: Grid, k, h0: np.ndarray, theta: np.ndarray) -> float:
    """The operator trace formula evaluated verbatim on the given operators."""
    kv = _kernel_values(k)
    kw = kops.to_weighted(grid, kv)
    hw = kops.to_weighted(grid, h0)
    tw = kops.to_weighted(grid, theta)
    n = kw.shape[0]
    r = np.linalg.solve(np.eye(n) - np.conj(kw) @ kw, np.eye(n))
    core = np.conj(kw) @ hw @ kw + 0.5 * np.conj(kw) @ tw + 0.5 * np.conj(tw) @ kw
    val = complex(np.trace(r @ core))
    if abs(val.imag) > 1e-8 * max(abs(val), 1e-300):
        raise NonRealTrace(val.imag, val)
    return float(val.real)


def total_energy(phi: np.ndarray, k, grid: Grid, pots: Potentials,
                 interaction: np.ndarray | None = None,
                 with_psi_form: bool = False) -> EnergyReport:
    """Hartree energy plus 1/N times the pair trace, with full breakdown.

    e_pair_trace uses the variational half weight on the pair-pair channels;
    breakdown["pair_trace_selfconsistent"] carries the literal full-weight
    trace on the self-consistent operators.
    """
    if interaction is None:
        interaction = build_interaction(grid, pots)
    kv = _kernel_values(k)
    n_part = pots.n_particles

    e_h = hartree_energy(phi, grid, pots, interaction)
    h0_half = assemble_h(phi, kv, 0.0, grid, pots, interaction, pair_weight=0.5)
    th_half = assemble_theta(phi, kv, grid, pots, interaction, pair_weight=0.5)
    e_pair = trace_energy(grid, kv, h0_half, th_half)

    h0_full = assemble_h(phi, kv, 0.0, grid, pots, interaction, pair_weight=1.0)
    th_full = assemble_theta(phi, kv, grid, pots, interaction, pair_weight=1.0)
    e_pair_sc = trace_energy(grid, kv, h0_full, th_full)

    mu = chemical_potential(phi, kv, grid, pots, interaction)
    report = EnergyReport(
        e_hartree=e_h,
        e_pair_trace=e_pair,
        e_total=e_h + e_pair / n_part,
        mu=mu,
        breakdown={
            "hartree_single_particle": e_h - 0.5 * quartic_term(grid, interaction, phi),
            "hartree_quartic_half": 0.5 * quartic_term(grid, interaction, phi),
            "pair_trace_variational": e_pair,
            "pair_trace_selfconsistent": e_pair_sc,
            "e_total_selfconsistent": e_h + e_pair_sc / n_part,
        },
    )
    if with_psi_form:
        psi = psi_transform(grid, kv)
        report.psi_form_value = psi_form_energy(phi, psi, grid, pots, interaction)
        report.breakdown["psi_form_per_particle"] = report.psi_form_value / n_part
    return report


def phi_equation_apply(phi: np.ndarray, k, grid: Grid, pots: Potentials,
                       interaction: np.ndarray | None = None) -> np.ndarray:
    """Left side of the condensate equation applied to phi (no mu term).

    (-Lap + V) phi + (v*|phi|^2) phi + (1/N)(v . n_pair) phi
    + (1/N)(v * rho_pair) phi + (1/N)(v . m_pair) conj(phi).
    """
    if interaction is None:
        interaction = build_interaction(grid, pots)
    kv = _kernel_values(k)
    sp = single_particle_kernel(grid, pots)
    out = kops.apply_kernel(grid, sp, phi)
    out = out + kops.convolve(grid, interaction, np.abs(phi) ** 2) * phi
    if np.any(kv):
        dens = densities_from_kernel(grid, kv)
        n_part = pots.n_particles
        out = out + kops.apply_kernel(grid, interaction * dens.n_pair, phi) / n_part
        out = out + kops.convolve(grid, interaction, dens.rho_pair) * phi / n_part
        out = out + kops.apply_kernel(grid, interaction * dens.m_pair, np.conj(phi)) / n_part
    return out


def chemical_potential(phi: np.ndarray, k, grid: Grid, pots: Potentials,
                       interaction: np.ndarray | None = None) -> float:
    """The multiplier formula: the condensate equation integrated against conj(phi)."""
    if interaction is None:
        interaction = build_interaction(grid, pots)
    val = kops.inner(grid, phi, phi_equation_apply(phi, k, grid, pots, interaction))
    val = complex(val)
    if abs(val.imag) > 1e-8 * max(abs(val), 1e-300):
        raise NonRealTrace(val.imag, val)
    return float(val.real)


def psi_form_energy(phi: np.ndarray, psi: np.ndarray, grid: Grid, pots: Potentials,
                    interaction: np.ndarray | None = None,
                    return_breakdown: bool = False):
    """Six-line quadrature form of the total energy in the unconstrained psi variable.

    Carries the overall factor N on the condensate terms (the per-particle
    value is this divided by N).  Line by line: condensate single-particle;
    interaction against the squared full pair function; pair single-particle;
    condensate-pair exchange; condensate-pair direct; pair-pair (direct,
    density-density) at 1/2N.
    """
    if interaction is None:
        interaction = build_interaction(grid, pots)
    n_part = pots.n_particles
    sp = single_particle_kernel(grid, pots)
    w = grid.weights

    pw = kops.to_weighted(grid, np.asarray(psi))
    nw = np.conj(pw.T) @ pw                      # conj(psi) o psi, weighted frame
    vals, vecs = np.linalg.eigh(0.5 * (nw + np.conj(nw.T)))
    root = (vecs * np.sqrt(1.0 + vals)) @ np.conj(vecs.T)
    m_pair_w = pw @ root                          # psi o (delta + conj psi o psi)^(1/2)

    phi_w = kops.field_to_weighted(grid, phi)
    m_full_w = np.outer(phi_w, phi_w) + m_pair_w / n_part
    rho_pair = np.real(np.diagonal(nw)) / w

    l1 = n_part * np.real(kops.inner(grid, phi, kops.apply_kernel(grid, sp, phi)))
    l2 = 0.5 * n_part * float(np.real(np.sum(interaction * np.abs(m_full_w) ** 2)))
    sp_w = kops.to_weighted(grid, sp)
    pp_w = pw @ np.conj(pw.T)                     # psi o conj(psi)
    l3 = 0.5 * float(np.real(np.trace(sp_w @ pp_w) + np.trace(sp_w @ nw.T)))
    exch_w = interaction * np.outer(phi_w, np.conj(phi_w))
    l4 = 0.5 * float(np.real(np.sum(exch_w * pp_w) + np.sum(np.conj(exch_w) * nw)))
    conv_rho = kops.convolve(grid, interaction, rho_pair)
    l5 = float(np.sum(w * np.abs(phi) ** 2 * conv_rho))
    l6 = (0.5 / n_part) * float(
        np.sum(interaction * np.abs(nw) ** 2)
        + np.sum(w * rho_pair * conv_rho))
    value = l1 + l2 + l3 + l4 + l5 + l6
    if return_breakdown:
        return value, {"l1": l1, "l2": l2, "l3": l3, "l4": l4, "l5": l5, "l6": l6}
    return value
