"""Zero-iterate condensate: constrained Hartree minimization and its energy.

The ground state of the outer iteration starts from the minimizer of the
Hartree functional

    E_H[phi] = <phi, (-Lap + V) phi> + 1/2 * integral |phi|^2 v_N |phi|^2

over normalized phi, solved by a self-consistent field loop with linear
mixing: rebuild the mean-field operator from the current density, take its
lowest eigenvector, mix, repeat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as kops
from .errors import DegenerateGround, NonConvergence
from .grid import Grid, Potentials, build_interaction, kinetic_operator


@dataclass
class HartreeOptions:
    mixing: float = 0.5
    max_iter: int = 500
    tol: float = 1e-10
    monitor_descent: bool = True

    def __post_init__(self):
        if not 0.0 < self.mixing <= 1.0:
            raise ValueError(f"mixing must lie in (0, 1], got {self.mixing}")


@dataclass
class HartreeResult:
    """Converged zero iterate: normalized phi0, its multiplier and energy."""

    phi0: np.ndarray
    mu0: float
    energy: float
    iterations: int
    residual: float


def single_particle_kernel(grid: Grid, pots: Potentials) -> np.ndarray:
    """Kernel of -Lap + V_trap."""
    return kinetic_operator(grid) + kops.diag_kernel(grid, pots.v_trap)


def quartic_term(grid: Grid, interaction: np.ndarray, phi: np.ndarray) -> float:
    """integral |phi|^2 v_N |phi|^2 (no 1/2)."""
    dens = np.abs(phi) ** 2
    return float(np.real(np.sum(grid.weights * dens * kops.convolve(grid, interaction, dens))))


def hartree_energy(phi: np.ndarray, grid: Grid, pots: Potentials,
                   interaction: np.ndarray | None = None,
                   sp_kernel: np.ndarray | None = None) -> float:
    """Hartree functional E_H[phi]; fails loudly if the value is materially complex."""
    if interaction is None:
        interaction = build_interaction(grid, pots)
    if sp_kernel is None:
        sp_kernel = single_particle_kernel(grid, pots)
    val = kops.inner(grid, phi, kops.apply_kernel(grid, sp_kernel, phi))
    val = complex(val) + 0.5 * quartic_term(grid, interaction, phi)
    if abs(val.imag) > 1e-8 * max(abs(val), 1e-300):
        raise ValueError(
            f"hartree energy acquired imaginary part {val.imag:.3e}; operator symmetry broken upstream")
    return val.real


def hartree_gradient(phi: np.ndarray, grid: Grid, pots: Potentials,
                     interaction: np.ndarray | None = None) -> np.ndarray:
    """First variation dE_H/d(conj phi) = (-Lap + V) phi + (v_N * |phi|^2) phi."""
    if interaction is None:
        interaction = build_interaction(grid, pots)
    sp = single_particle_kernel(grid, pots)
    conv = kops.convolve(grid, interaction, np.abs(phi) ** 2)
    return kops.apply_kernel(grid, sp, phi) + conv * phi


def _lowest_pair(grid: Grid, kernel: np.ndarray):
    """Two lowest eigenvalues and the ground eigenvector of a Hermitian kernel."""
    hw = kops.to_weighted(grid, kernel)
    vals, vecs = np.linalg.eigh(0.5 * (hw + np.conj(hw.T)))
    phi = kops.field_from_weighted(grid, vecs[:, 0])
    return vals[0], vals[1], phi


def solve_hartree(grid: Grid, pots: Potentials, opts: HartreeOptions | None = None) -> HartreeResult:
    """SCF minimization of E_H over the unit sphere.

    Returns phi0 real and nonnegative (global phase fixed; the nodeless
    ground state of a Schroedinger-type operator admits this), with mu0
    from the zero-iterate formula

        mu0 = <phi0, (-Lap + V) phi0> + integral |phi0|^2 v_N |phi0|^2.

    Raises NonConvergence if the residual tolerance is not met within the
    iteration budget, and DegenerateGround if the mean-field operator loses
    the spectral gap the scheme assumes.
    """
    opts = opts or HartreeOptions()
    interaction = build_interaction(grid, pots)
    sp = single_particle_kernel(grid, pots)

    # noninteracting ground state as the starting guess
    _, _, phi = _lowest_pair(grid, sp)
    phi = _fix_phase(grid, phi)

    energy_prev = hartree_energy(phi, grid, pots, interaction, sp)
    residual = np.inf
    for it in range(1, opts.max_iter + 1):
        conv = kops.convolve(grid, interaction, np.abs(phi) ** 2)
        h_mf = sp + kops.diag_kernel(grid, conv)
        e0, e1, phi_new = _lowest_pair(grid, h_mf)
        if e1 - e0 < 1e-12:
            raise DegenerateGround(e1 - e0)
        if np.real(kops.inner(grid, phi_new, phi)) < 0:
            phi_new = -phi_new
        phi = kops.normalize(grid, (1.0 - opts.mixing) * phi + opts.mixing * phi_new)
        phi = _fix_phase(grid, phi)

        hphi = kops.apply_kernel(grid, h_mf, phi)
        mu = np.real(kops.inner(grid, phi, hphi))
        residual = kops.field_norm(grid, hphi - mu * phi)

        energy = hartree_energy(phi, grid, pots, interaction, sp)
        if opts.monitor_descent and opts.mixing <= 0.5 and energy > energy_prev + 1e-10:
            raise NonConvergence(it, residual,
                                 message=f"energy ascent {energy - energy_prev:.3e} during Hartree SCF")
        energy_prev = energy

        if residual < opts.tol:
            mu0 = float(np.real(kops.inner(grid, phi, kops.apply_kernel(grid, sp, phi)))
                        + quartic_term(grid, interaction, phi))
            return HartreeResult(phi0=phi, mu0=mu0, energy=energy, iterations=it, residual=residual)

    raise NonConvergence(opts.max_iter, residual)


def _fix_phase(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Make the ground state real and nonnegative in the dominant component."""
    if np.iscomplexobj(phi):
        j = int(np.argmax(np.abs(phi)))
        phase = phi[j] / abs(phi[j])
        phi = phi / phase
        if np.max(np.abs(phi.imag)) < 1e-12 * np.max(np.abs(phi.real)):
            phi = phi.real
    if phi[int(np.argmax(np.abs(phi)))] < 0:
        phi = -phi
    return phi
