"""Porous infill optimization: local volume constraints aggregated into a
p-mean bound, driven by MMA."""
from __future__ import annotations

import time
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy import ndimage

from . import fem
from .domain import VOID, VoxelDomain
from .mma import MMAState, mma_update
from .topopt import (DensityChain, DensityField, DensityFilter,
                     OptimizationError, OptimizationReport,
                     compliance_sensitivity)


@dataclass
class PorousConfig:
    Ve: float = 0.5
    Re: float = 6.0                    # element units
    p_agg: float = 16.0
    filter_radius: float = 1.5
    p: float = 3.0
    Emin_ratio: float = 1e-9
    beta0: float = 1.0
    beta_double_every: int = 30
    beta_max: float = 64.0
    eta: float = 0.5
    move: float = 0.2
    max_iters: int = 150
    change_tol: float = 0.01
    solver: fem.SolverConfig = dfield(default_factory=fem.SolverConfig)

    def __post_init__(self):
        if not 0 < self.Ve < 1:
            raise ValueError("Ve must lie in (0, 1)")
        if self.Re < 1:
            raise ValueError("Re must be >= 1 element")


def _sphere_kernel(Re: float) -> np.ndarray:
    r = int(np.floor(Re + 1e-9))
    ax = np.arange(-r, r + 1)
    dx, dy, dz = np.meshgrid(ax, ax, ax, indexing="ij")
    return (np.sqrt(dx ** 2 + dy ** 2 + dz ** 2) <= Re + 1e-9).astype(np.float64)


class LocalFraction:
    """f_e = sum of rho_bar over the spherical neighborhood / its non-void
    element count."""

    def __init__(self, dom: VoxelDomain, Re: float):
        self.dom = dom
        self.kernel = _sphere_kernel(Re)
        self.mask = (dom.labels != VOID).astype(np.float64)
        self.count = ndimage.convolve(self.mask, self.kernel,
                                      mode="constant", cval=0.0)
        self.count[self.count == 0] = 1.0

    def apply(self, rho_bar: np.ndarray) -> np.ndarray:
        g = rho_bar.reshape(self.dom.dims, order="F") * self.mask
        s = ndimage.convolve(g, self.kernel, mode="constant", cval=0.0)
        return (s / self.count * self.mask).ravel(order="F")

    def apply_transpose(self, sens: np.ndarray) -> np.ndarray:
        g = sens.reshape(self.dom.dims, order="F") * self.mask / self.count
        out = ndimage.convolve(g, self.kernel, mode="constant", cval=0.0)
        return (out * self.mask).ravel(order="F")


def local_fraction(dom: VoxelDomain, rho_bar: np.ndarray, Re: float) -> np.ndarray:
    return LocalFraction(dom, Re).apply(rho_bar)


def aggregate_constraint(f: np.ndarray, Ve: float, p_agg: float,
                         active: np.ndarray,
                         correction: float = 1.0) -> tuple[float, np.ndarray]:
    """p-mean surrogate g = corr * (mean f^p)^(1/p) / Ve - 1 and its
    df-gradient (full-grid layout, zero off the active set).

    `correction` is the adaptive max/p-mean ratio that tightens the p-mean
    underestimate toward the true maximum across iterations.
    """
    fa = np.clip(f[active], 0.0, 1.0)
    n = len(fa)
    mean_p = float(np.mean(fa ** p_agg))
    pm = mean_p ** (1.0 / p_agg)
    g = correction * pm / Ve - 1.0
    grad = np.zeros_like(f)
    if mean_p > 0:
        grad[active] = correction * (pm / Ve) * (fa ** (p_agg - 1)) / (n * mean_p)
    return g, grad


def run_porous(dom: VoxelDomain, config: PorousConfig,
               callback=None) -> tuple[DensityField, OptimizationReport]:
    """Same loop skeleton as density TO with the local-volume constraint and
    an MMA design update."""
    t0 = time.time()
    if not dom.fixed.any() or not np.abs(dom.loads).any():
        raise OptimizationError("preset needs both fixations and loads")
    active = dom.active_elements()
    filt = DensityFilter(dom, config.filter_radius)
    chain = DensityChain(dom, filt, config.beta0, config.eta)
    frac = LocalFraction(dom, config.Re)
    free = active[~chain.passive[active]]
    Emin = config.Emin_ratio * dom.E0

    rho = np.zeros(dom.n_elements)
    rho[active] = config.Ve
    rho[chain.passive] = 1.0
    rho_tilde, rho_bar = chain.forward(rho)
    state = MMAState.create(len(free), 0.0, 1.0)
    report = OptimizationReport("porous", {
        "Ve": config.Ve, "Re": config.Re, "p_agg": config.p_agg,
        "filter_radius": config.filter_radius, "max_iters": config.max_iters})
    f_ext = dom.loads.ravel()
    u = None
    beta = config.beta0
    correction = 1.0
    for it in range(config.max_iters):
        moduli = np.zeros(dom.n_elements)
        moduli[active] = fem.simp_modulus(rho_bar[active], config.p, Emin, dom.E0)
        op = fem.GridOperator(dom, moduli)
        hier = fem.MultigridHierarchy(op, config.solver)
        res = fem.solve(dom, moduli, f_ext, config.solver, hierarchy=hier, u0=u)
        if not res.converged:
            raise OptimizationError(
                f"solver failed at iteration {it}: residual {res.residuals[-1]:.3e}")
        u = res.u
        c = fem.compliance(u, f_ext)
        report.compliance_history.append(c)
        report.solver_iters.append(res.iterations)

        dc_bar = compliance_sensitivity(op, u, rho_bar, config.p, Emin, dom.E0)
        dc = chain.backward(rho_tilde, dc_bar)
        scale = np.abs(dc[free]).max()
        dc_n = dc / max(scale, 1e-300)

        fractions = frac.apply(rho_bar)
        pm = float(np.mean(np.clip(fractions[active], 0, 1) ** config.p_agg)
                   ) ** (1.0 / config.p_agg)
        fmax = float(fractions[active].max())
        if pm > 0:
            # damped update of the max/p-mean tightening factor
            correction = 0.5 * correction + 0.5 * (fmax / pm)
        g, dg_df = aggregate_constraint(fractions, config.Ve, config.p_agg,
                                        active, correction)
        dg_bar = frac.apply_transpose(dg_df)
        dg = chain.backward(rho_tilde, dg_bar)

        # normalize the constraint like the objective: the p-mean gradient
        # is O(1/n), which starves the dual of leverage on large grids
        g_scale = 1.0 / max(float(np.abs(dg[free]).max()), 1e-300)
        x_new = mma_update(state, rho[free], dc_n[free], g * g_scale,
                           dg[free] * g_scale, move=config.move)
        change = float(np.abs(x_new - rho[free]).max())
        report.change_history.append(change)
        rho[free] = x_new
        if (it + 1) % config.beta_double_every == 0 and beta < config.beta_max:
            beta = min(2 * beta, config.beta_max)
            chain.beta = beta
        rho_tilde, rho_bar = chain.forward(rho)
        if callback:
            callback(it, rho, rho_bar, c)
        if change < config.change_tol and beta >= config.beta_max:
            break
    field = DensityField(rho, rho_tilde, rho_bar, dom)
    fractions = frac.apply(rho_bar)
    report.compliance = report.compliance_history[-1]
    report.volume_fraction = field.volume_fraction()
    report.extra["max_local_fraction"] = float(fractions[active].max())
    report.extra["aggregation_upper_bound"] = \
        config.Ve * len(active) ** (1.0 / config.p_agg)
    report.wall_s = time.time() - t0
    return field, report


def calibrate_ve(dom: VoxelDomain, config: PorousConfig, target_vf: float,
                 tol: float = 0.02, max_outer: int = 6):
    """Dichotomy on Ve so the emergent global fraction matches target_vf."""
    lo, hi = 0.05, 0.95
    best = None
    ve = min(max(config.Ve, lo), hi)
    for _ in range(max_outer):
        cfg = PorousConfig(**{**config.__dict__, "Ve": ve})
        field, report = run_porous(dom, cfg)
        vf = report.volume_fraction
        if best is None or abs(vf - target_vf) < abs(best[1].volume_fraction - target_vf):
            best = (field, report)
        if abs(vf - target_vf) <= tol:
            return field, report
        if vf > target_vf:
            hi = ve
        else:
            lo = ve
        ve = 0.5 * (lo + hi)
    return best
