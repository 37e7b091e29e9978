"""Outer iteration for the coupled condensate / pair-kernel system.

Alternating scheme: from the Hartree zero iterate, freeze the operators
H[n] = H[phi_n, k_n; mu_n] and Theta[n] = Theta[phi_n, k_n], solve the
Riccati subproblem for k_{n+1} through the quasiparticle eigenproblem, then
relax phi at fixed k through the self-adjoint condensate equation, update
mu, and repeat until the self-consistent residuals of both equations and
the mu increment are simultaneously below tolerance.  A direct backend
minimizes the unconstrained-psi energy over the joint sphere
||phi||^2 + ||psi||^2_HS / N = 1 by projected gradient descent and finishes
with a normalization polish into the unit-norm-phi convention.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels as kops
from .bdg import BdgSolution, kernel_from_bdg, riccati_residual, solve_bdg
from .energy import (EnergyReport, chemical_potential, phi_equation_apply,
                     total_energy, trace_energy)
from .errors import DegenerateGround, GapViolated, NonConvergence
from .grid import Grid, Potentials, build_interaction
from .hartree import HartreeOptions, single_particle_kernel, solve_hartree
from .operators import assemble_h, assemble_theta, gap_margin
from .pair_kernel import (PairKernel, densities_from_kernel,
                          project_offcondensate, psi_inverse, zero_kernel)
from .variations import psi_form_gradients

log = logging.getLogger("paircond")


@dataclass
class ConvergenceCriteria:
    tol_riccati: float = 1e-8
    tol_phi: float = 1e-8
    tol_mu: float = 1e-9
    max_outer: int = 50
    damping: float = 1.0          # kernel mixing alpha_k
    phi_mixing: float = 0.5
    phi_max_iter: int = 400

    def __post_init__(self):
        for name in ("tol_riccati", "tol_phi", "tol_mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class SolverState:
    """One accepted outer iterate."""

    iterate_index: int
    phi: np.ndarray
    k: PairKernel
    mu: float
    energy: EnergyReport
    riccati_resid: float
    phi_resid: float
    gap: float
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def system_residuals(phi: np.ndarray, k, mu: float, grid: Grid, pots: Potentials,
                     interaction: np.ndarray | None = None) -> tuple[float, float]:
    """Self-consistent residuals of the two coupled equations.

    Riccati residual is Hilbert-Schmidt, relative to ||Theta||; the
    condensate residual is the L2 norm of (L phi - mu phi) / max(1, |mu|).
    """
    if interaction is None:
        interaction = build_interaction(grid, pots)
    h = assemble_h(phi, k, mu, grid, pots, interaction)
    theta = assemble_theta(phi, k, grid, pots, interaction)
    r_ricc = riccati_residual(grid, k, h, theta, phi)
    r_phi = kops.field_norm(grid, phi_equation_apply(phi, k, grid, pots, interaction) - mu * phi)
    return r_ricc, r_phi / max(1.0, abs(mu))


def k_step(grid: Grid, pots: Potentials, phi: np.ndarray, k: PairKernel, mu: float,
           criteria: ConvergenceCriteria,
           interaction: np.ndarray | None = None) -> tuple[PairKernel, BdgSolution, dict]:
    """One Riccati solve at frozen operators H[n], Theta[n].

    Re-projects the incoming kernel onto the current condensate complement
    (the projector drifts as phi moves; the drift magnitude is reported),
    verifies the gap, solves the quasiparticle problem, reconstructs the
    kernel and optionally mixes it with the previous iterate.
    """
    if interaction is None:
        interaction = build_interaction(grid, pots)
    drift = 0.0
    if not k.is_zero:
        reproj = project_offcondensate(grid, k.values, phi)
        drift = kops.hs_norm(grid, reproj.values - k.values)
        k = reproj
    h = assemble_h(phi, k, mu, grid, pots, interaction)
    theta = assemble_theta(phi, k, grid, pots, interaction)
    gap = gap_margin(grid, h, theta, phi)
    if gap <= 0:
        raise GapViolated(gap)
    if not np.any(theta):
        # no anomalous channel (g = 0): the Riccati solution is exactly zero
        diag = {"gap": gap, "reproject_drift": drift, "k_step_resid": 0.0,
                "e_kstep": 0.0, "theta_hs": 0.0}
        return zero_kernel(grid, phi), None, diag
    sol = solve_bdg(grid, h, theta, phi)
    k_new = kernel_from_bdg(grid, sol, phi, h, theta)
    if criteria.damping < 1.0:
        mixed = (1.0 - criteria.damping) * k.values + criteria.damping * k_new.values
        k_new = project_offcondensate(grid, mixed, phi)
    step_resid = riccati_residual(grid, k_new, h, theta, phi)
    if step_resid > max(criteria.tol_riccati, 1e-6):
        raise NonConvergence(1, step_resid, message="k-step stalled above tolerance")
    e_kstep = trace_energy(grid, k_new, h, theta)
    if e_kstep > 1e-10:
        log.warning("k-step objective positive (%.3e); minimizer suspect", e_kstep)
    diag = {"gap": gap, "reproject_drift": drift, "k_step_resid": step_resid,
            "e_kstep": e_kstep, "theta_hs": kops.hs_norm(grid, theta)}
    return k_new, sol, diag


def phi_step(grid: Grid, pots: Potentials, phi: np.ndarray, k: PairKernel,
             criteria: ConvergenceCriteria,
             interaction: np.ndarray | None = None) -> tuple[np.ndarray, float, dict]:
    """Relax the condensate at fixed pair kernel.

    SCF on the nonlinear eigenproblem (h[k] + Theta_pair[k]) phi = mu phi for
    real phi: the phi-dependent mean-field term is rebuilt each pass, the
    pair terms stay frozen.  Returns the new phi and mu from the multiplier
    formula.
    """
    if interaction is None:
        interaction = build_interaction(grid, pots)
    sp = single_particle_kernel(grid, pots)
    n_part = pots.n_particles

    frozen = np.zeros((grid.n, grid.n))
    if not k.is_zero:
        dens = densities_from_kernel(grid, k.values)
        frozen = frozen + (interaction * np.real(dens.n_pair)) / n_part
        frozen = frozen + kops.diag_kernel(grid, kops.convolve(grid, interaction, dens.rho_pair)) / n_part
        frozen = frozen + (interaction * np.real(dens.m_pair)) / n_part

    phi = np.real(phi).astype(float)
    resid = np.inf
    for it in range(1, criteria.phi_max_iter + 1):
        conv = kops.convolve(grid, interaction, phi**2)
        op = sp + kops.diag_kernel(grid, conv) + frozen
        ow = kops.to_weighted(grid, op)
        vals, vecs = np.linalg.eigh(0.5 * (ow + ow.T))
        if vals[1] - vals[0] < 1e-12:
            raise DegenerateGround(vals[1] - vals[0])
        phi_new = kops.field_from_weighted(grid, vecs[:, 0])
        if float(np.real(kops.inner(grid, phi_new, phi))) < 0:
            phi_new = -phi_new
        phi = kops.normalize(grid, (1.0 - criteria.phi_mixing) * phi + criteria.phi_mixing * phi_new)
        opw_phi = kops.apply_kernel(grid, op, phi)
        ray = float(np.real(kops.inner(grid, phi, opw_phi)))
        resid = kops.field_norm(grid, opw_phi - ray * phi)
        if resid < 0.1 * criteria.tol_phi:
            break
    else:
        raise NonConvergence(criteria.phi_max_iter, resid, message="phi-step SCF stalled")
    if phi[int(np.argmax(np.abs(phi)))] < 0:
        phi = -phi
    mu = chemical_potential(phi, k, grid, pots, interaction)
    return phi, mu, {"phi_scf_iterations": it, "phi_scf_resid": resid}


def monitor_gap(grid: Grid, pots: Potentials, state: SolverState,
                interaction: np.ndarray | None = None) -> float:
    """Recompute the gap margin on the current self-consistent operators."""
    if interaction is None:
        interaction = build_interaction(grid, pots)
    h = assemble_h(state.phi, state.k, state.mu, grid, pots, interaction)
    theta = assemble_theta(state.phi, state.k, grid, pots, interaction)
    c = gap_margin(grid, h, theta, state.phi)
    log.info("gap monitor: c=%.6g, |Theta|_HS=%.6g, mu=%.9g",
             c, kops.hs_norm(grid, theta), state.mu)
    return c


def _make_state(grid, pots, interaction, n, phi, k, mu, t0, extra=None) -> SolverState:
    r_ricc, r_phi = system_residuals(phi, k, mu, grid, pots, interaction)
    h = assemble_h(phi, k, mu, grid, pots, interaction)
    theta = assemble_theta(phi, k, grid, pots, interaction)
    gap = gap_margin(grid, h, theta, phi)
    report = total_energy(phi, k, grid, pots, interaction)
    diag = dict(extra or {})
    if not k.is_zero:
        dens = densities_from_kernel(grid, k.values)
        diag["rho_pair_l1"] = dens.l1_norm(grid)
        diag["rho_pair_l3"] = dens.l3_norm(grid)
        diag["k_hs"] = kops.hs_norm(grid, k.values)
        diag["k_op"] = k.op_norm
        diag["offcond_leak"] = float(kops.field_norm(
            grid, kops.apply_kernel(grid, k.values, phi)))
    return SolverState(iterate_index=n, phi=phi, k=k, mu=mu, energy=report,
                       riccati_resid=r_ricc, phi_resid=r_phi, gap=gap,
                       wall_time=time.perf_counter() - t0, diagnostics=diag)


def solve_coupled(grid: Grid, pots: Potentials,
                  criteria: ConvergenceCriteria | None = None,
                  backend: str = "iterative",
                  hartree_opts: HartreeOptions | None = None,
                  on_state=None) -> tuple[SolverState, list[SolverState]]:
    """Full coupled solve; returns the converged state and the iterate history.

    backend "iterative" is the alternating scheme; "direct" is projected
    gradient descent on the psi-form energy.  Both certify the final
    self-consistent residuals; NonConvergence carries the history.
    """
    criteria = criteria or ConvergenceCriteria()
    if backend == "iterative":
        return _solve_iterative(grid, pots, criteria, hartree_opts, on_state)
    if backend == "direct":
        return _solve_direct(grid, pots, criteria, hartree_opts, on_state)
    raise ValueError(f"unknown backend {backend!r}")


def _solve_iterative(grid, pots, criteria, hartree_opts, on_state,
                     initial: SolverState | None = None):
    t0 = time.perf_counter()
    interaction = build_interaction(grid, pots)
    history: list[SolverState] = []

    if initial is None:
        hr = solve_hartree(grid, pots, hartree_opts)
        state = _make_state(grid, pots, interaction, 0, hr.phi0,
                            zero_kernel(grid, hr.phi0), hr.mu0, t0,
                            {"hartree_iterations": hr.iterations})
        history.append(state)
        _emit(on_state, state)
    else:
        state = initial
        history.append(state)

    damping = criteria.damping
    for n in range(state.iterate_index, criteria.max_outer):
        crit = replace(criteria, damping=damping)
        k_new, _, kdiag = k_step(grid, pots, state.phi, state.k, state.mu, crit, interaction)
        phi_new, mu_new, pdiag = phi_step(grid, pots, state.phi, k_new, crit, interaction)
        cand = _make_state(grid, pots, interaction, n + 1, phi_new, k_new, mu_new, t0,
                           {**kdiag, **pdiag})
        if cand.gap <= 0:
            cand.diagnostics["aborted"] = "gap"
            history.append(cand)
            raise GapViolated(cand.gap)
        if cand.energy.e_total > state.energy.e_total + 1e-10 and damping > 1e-3:
            damping = 0.5 * damping
            log.warning("energy ascent %.3e at iterate %d; halving damping to %.3g",
                        cand.energy.e_total - state.energy.e_total, n + 1, damping)
            continue
        delta_mu = abs(cand.mu - state.mu)
        state = cand
        history.append(state)
        _emit(on_state, state)
        log.info("outer %d: mu=%.12g e=%.12g ricc=%.3e phi=%.3e gap=%.4g",
                 state.iterate_index, state.mu, state.energy.e_total,
                 state.riccati_resid, state.phi_resid, state.gap)
        if (state.riccati_resid < criteria.tol_riccati
                and state.phi_resid < criteria.tol_phi
                and delta_mu < criteria.tol_mu):
            return state, history
    raise NonConvergence(criteria.max_outer,
                         max(state.riccati_resid, state.phi_resid),
                         history=history)


def resume_iterative(grid, pots, criteria, state: SolverState, on_state=None):
    """Continue the alternating scheme from a checkpointed state."""
    return _solve_iterative(grid, pots, criteria, None, on_state, initial=state)


def _emit(cb, state):
    if cb is not None:
        cb(state)


def _solve_direct(grid, pots, criteria, hartree_opts, on_state):
    """Projected gradient descent on the psi-form energy over the joint sphere."""
    t0 = time.perf_counter()
    interaction = build_interaction(grid, pots)
    n_part = pots.n_particles

    hr = solve_hartree(grid, pots, hartree_opts)
    phi_w = kops.field_to_weighted(grid, hr.phi0)
    psi_w = np.zeros((grid.n, grid.n))

    def project(phi_w, psi_w):
        norm = np.sqrt(float(phi_w @ phi_w) + float(np.sum(psi_w**2)) / n_part)
        return phi_w / norm, psi_w / norm

    def energy_of(phi_w, psi_w):
        from .energy import psi_form_energy
        return psi_form_energy(kops.field_from_weighted(grid, phi_w),
                               kops.from_weighted(grid, psi_w), grid, pots, interaction)

    phi_w, psi_w = project(phi_w, psi_w)
    e_prev = energy_of(phi_w, psi_w)
    step = 1.0 / max(1.0, abs(e_prev))
    history: list[SolverState] = []
    grad_norm = np.inf
    lam = n_part * hr.mu0
    for it in range(1, 2001):
        g_phi, g_psi = psi_form_gradients(kops.field_from_weighted(grid, phi_w),
                                          kops.from_weighted(grid, psi_w),
                                          grid, pots, interaction)
        # multiplier and tangent projection on the joint sphere
        lam = (g_phi @ phi_w + np.sum(g_psi * psi_w)) / \
              (2.0 * (phi_w @ phi_w + np.sum(psi_w**2) / n_part))
        t_phi = g_phi - 2.0 * lam * phi_w
        t_psi = g_psi - (2.0 * lam / n_part) * psi_w
        grad_norm = np.sqrt(float(t_phi @ t_phi) + float(np.sum(t_psi**2)))
        if grad_norm < 1e-9 * max(1.0, abs(e_prev)):
            break
        ok = False
        for _ in range(50):
            cand_phi, cand_psi = project(phi_w - step * t_phi, psi_w - step * t_psi)
            e_new = energy_of(cand_phi, cand_psi)
            if e_new <= e_prev - 1e-4 * step * grad_norm**2:
                ok = True
                break
            step *= 0.5
            if step < 1e-18:
                break
        if not ok:
            break
        phi_w, psi_w = cand_phi, cand_psi
        e_prev = e_new
        step *= 1.6
    mu_direct = lam / n_part

    # polish into the unit-norm-phi convention of the coupled system
    phi = kops.field_from_weighted(grid, phi_w)
    phi = np.real(phi) if np.max(np.abs(np.imag(phi))) == 0 else phi
    phi = kops.normalize(grid, phi)
    k = psi_inverse(grid, kops.from_weighted(grid, psi_w))
    k = project_offcondensate(grid, np.real(k.values), phi)
    mu = chemical_potential(phi, k, grid, pots, interaction)
    pre_polish = (phi.copy(), k.values.copy(), mu)

    polish_crit = replace(criteria, max_outer=6)
    state = _make_state(grid, pots, interaction, 0, phi, k, mu, t0,
                        {"backend": "direct", "descent_iterations": it,
                         "grad_norm": grad_norm, "mu_descent": mu_direct})
    try:
        final, hist2 = _solve_iterative(grid, pots, polish_crit, None, on_state, initial=state)
    except NonConvergence as err:
        raise NonConvergence(it, grad_norm, message="direct backend polish failed",
                             history=history) from err
    drift = kops.field_norm(grid, final.phi - pre_polish[0])
    final.diagnostics["backend"] = "direct"
    final.diagnostics["descent_iterations"] = it
    final.diagnostics["polish_phi_drift"] = drift
    final.diagnostics["polish_mu_drift"] = abs(final.mu - pre_polish[2])
    history.extend(hist2)
    return final, history
