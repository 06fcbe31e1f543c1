"""Density-based topology optimization with a global volume constraint."""
from __future__ import annotations

import time
from dataclasses import dataclass, field as dfield
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import fem, volio
from .domain import PASSIVE, VOID, VoxelDomain


class OptimizationError(RuntimeError):
    pass


@dataclass
class TopOptConfig:
    V0: float = 0.3
    filter_radius: float = 1.5         # element units
    p: float = 3.0
    Emin_ratio: float = 1e-9
    beta0: float = 1.0
    beta_double_every: int = 40
    beta_max: float = 64.0
    eta: float = 0.5
    move: float = 0.2
    max_iters: int = 100
    change_tol: float = 0.01
    snapshot_every: int = 10
    solver: fem.SolverConfig = dfield(default_factory=fem.SolverConfig)

    def __post_init__(self):
        if not 0 < self.V0 < 1:
            raise ValueError("V0 must lie in (0, 1)")
        if self.filter_radius < 1:
            raise ValueError("filter_radius must be >= 1 element")


@dataclass
class DensityField:
    """Design variables plus the filtered and projected caches."""

    rho: np.ndarray          # (n_elements,), 0 in void
    rho_tilde: np.ndarray
    rho_bar: np.ndarray
    dom: VoxelDomain

    def volume_fraction(self) -> float:
        active = self.dom.active_elements()
        return float(self.rho_bar[active].mean())


def _conic_kernel(radius: float) -> np.ndarray:
    r = int(np.ceil(radius - 1e-9)) - 1
    r = max(r, 0)
    ax = np.arange(-r, r + 1)
    dx, dy, dz = np.meshgrid(ax, ax, ax, indexing="ij")
    dist = np.sqrt(dx ** 2 + dy ** 2 + dz ** 2)
    return np.maximum(0.0, radius - dist)


class DensityFilter:
    """Conic density filter restricted to non-void elements.

    rho_tilde_e = sum_i w_ie rho_i / sum_i w_ie, weights w = max(0, r - d).
    """

    def __init__(self, dom: VoxelDomain, radius: float):
        self.dom = dom
        self.kernel = _conic_kernel(radius)
        self.mask = (dom.labels != VOID).astype(np.float64)
        self.weight_sum = ndimage.convolve(self.mask, self.kernel,
                                           mode="constant", cval=0.0)
        self.weight_sum[self.mask == 0] = 1.0    # avoid divide-by-zero in void

    def _grid(self, flat: np.ndarray) -> np.ndarray:
        return flat.reshape(self.dom.dims, order="F")

    def apply(self, rho: np.ndarray) -> np.ndarray:
        g = self._grid(np.asarray(rho, dtype=np.float64)) * self.mask
        out = ndimage.convolve(g, self.kernel, mode="constant", cval=0.0)
        out = out / self.weight_sum * self.mask
        return out.ravel(order="F")

    def apply_transpose(self, sens: np.ndarray) -> np.ndarray:
        g = self._grid(np.asarray(sens, dtype=np.float64)) * self.mask / self.weight_sum
        out = ndimage.convolve(g, self.kernel, mode="constant", cval=0.0) * self.mask
        return out.ravel(order="F")


def density_filter(dom: VoxelDomain, rho: np.ndarray, radius: float) -> np.ndarray:
    return DensityFilter(dom, radius).apply(rho)


def heaviside_project(rho_tilde, beta: float, eta: float):
    """Smoothed Heaviside projection of the filtered field."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    t = np.tanh(beta * eta)
    denom = t + np.tanh(beta * (1 - eta))
    if denom == 0:                               # beta == 0 limit
        return np.asarray(rho_tilde, dtype=np.float64).copy()
    return (t + np.tanh(beta * (np.asarray(rho_tilde) - eta))) / denom


def heaviside_derivative(rho_tilde, beta: float, eta: float):
    if beta == 0:
        return np.ones_like(np.asarray(rho_tilde, dtype=np.float64))
    denom = np.tanh(beta * eta) + np.tanh(beta * (1 - eta))
    return beta / np.cosh(beta * (np.asarray(rho_tilde) - eta)) ** 2 / denom


class DensityChain:
    """rho -> filtered -> projected pipeline with passive pinning and the
    chain-rule transpose used by both optimizers."""

    def __init__(self, dom: VoxelDomain, filt: DensityFilter,
                 beta: float, eta: float):
        self.dom = dom
        self.filt = filt
        self.beta = beta
        self.eta = eta
        self.passive = (dom.labels == PASSIVE).ravel(order="F")
        self.active = dom.active_elements()

    def forward(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rho_eff = rho.copy()
        rho_eff[self.passive] = 1.0
        rho_tilde = self.filt.apply(rho_eff)
        rho_bar = heaviside_project(rho_tilde, self.beta, self.eta)
        rho_bar[self.passive] = 1.0
        return rho_tilde, rho_bar

    def backward(self, rho_tilde: np.ndarray, d_rho_bar: np.ndarray) -> np.ndarray:
        """Chain d(objective)/d(rho_bar) back to d/d(rho)."""
        d = d_rho_bar * heaviside_derivative(rho_tilde, self.beta, self.eta)
        d = self.filt.apply_transpose(d)
        d[self.passive] = 0.0
        return d


def compliance_sensitivity(op: fem.GridOperator, u: np.ndarray,
                           rho_bar: np.ndarray, p: float, Emin: float,
                           E0: float) -> np.ndarray:
    """dc/d(rho_bar) per element over the full grid (0 in void)."""
    energies_unit = op.element_energies(u) / op.scale   # u_e^T K_e0 u_e
    d = np.zeros(op.dom.n_elements)
    d[op.active] = -p * rho_bar[op.active] ** (p - 1) * (E0 - Emin) * energies_unit
    return d


def oc_update(rho: np.ndarray, dc: np.ndarray, dv: np.ndarray,
              V0: float, move: float, chain: DensityChain,
              vol_tol: float = 1e-6) -> np.ndarray:
    """Optimality-criteria update; lambda bisected so the projected global
    volume meets V0."""
    active = chain.active
    free = active[~chain.passive[active]]
    dc = np.minimum(dc, -1e-12)
    dv = np.maximum(dv, 1e-12)
    n_active = len(active)

    def candidate(lmid):
        r = rho.copy()
        step = rho[free] * np.sqrt(-dc[free] / (lmid * dv[free]))
        r[free] = np.clip(np.clip(step, rho[free] - move, rho[free] + move), 0.0, 1.0)
        return r

    def volume(r):
        _, rho_bar = chain.forward(r)
        return float(rho_bar[active].sum()) / n_active

    l1, l2 = 1e-12, 1e12
    if volume(candidate(l2)) > V0:
        raise OptimizationError(
            f"OC bisection cannot bracket: volume at lambda={l2:g} still "
            f"exceeds V0={V0}")
    while (l2 - l1) / (l1 + l2) > vol_tol:
        lmid = 0.5 * (l1 + l2)
        if volume(candidate(lmid)) > V0:
            l1 = lmid
        else:
            l2 = lmid
    return candidate(0.5 * (l1 + l2))


@dataclass
class OptimizationReport:
    strategy: str
    params: dict
    compliance: float = 0.0
    volume_fraction: float = 0.0
    compliance_history: list = dfield(default_factory=list)
    change_history: list = dfield(default_factory=list)
    solver_iters: list = dfield(default_factory=list)
    wall_s: float = 0.0
    extra: dict = dfield(default_factory=dict)


def run_topopt(dom: VoxelDomain, config: TopOptConfig,
               out_dir: str | Path | None = None,
               callback=None) -> tuple[DensityField, OptimizationReport]:
    """SIMP + OC loop: solve -> sensitivities -> OC update -> beta continuation."""
    t0 = time.time()
    if not dom.fixed.any() or not np.abs(dom.loads).any():
        raise OptimizationError("preset needs both fixations and loads")
    active = dom.active_elements()
    passive = (dom.labels == PASSIVE).ravel(order="F")
    rho = np.zeros(dom.n_elements)
    rho[active] = config.V0
    rho[passive] = 1.0
    filt = DensityFilter(dom, config.filter_radius)
    Emin = config.Emin_ratio * dom.E0
    beta = config.beta0
    chain = DensityChain(dom, filt, beta, config.eta)
    rho_tilde, rho_bar = chain.forward(rho)
    report = OptimizationReport("topopt", {
        "V0": config.V0, "filter_radius": config.filter_radius, "p": config.p,
        "beta_max": config.beta_max, "max_iters": config.max_iters})
    f = dom.loads.ravel()
    u = None
    out_dir = Path(out_dir) if out_dir else None
    for it in range(config.max_iters):
        moduli = np.zeros(dom.n_elements)
        moduli[active] = fem.simp_modulus(rho_bar[active], config.p, Emin, dom.E0)
        op = fem.GridOperator(dom, moduli)
        hier = fem.MultigridHierarchy(op, config.solver)
        res = fem.solve(dom, moduli, f, config.solver, hierarchy=hier, u0=u)
        if not res.converged:
            raise OptimizationError(
                f"solver failed at iteration {it}: residual {res.residuals[-1]:.3e}")
        u = res.u
        c = fem.compliance(u, f)
        report.compliance_history.append(c)
        report.solver_iters.append(res.iterations)
        dc_bar = compliance_sensitivity(op, u, rho_bar, config.p, Emin, dom.E0)
        dc = chain.backward(rho_tilde, dc_bar)
        dv_bar = np.zeros(dom.n_elements)
        dv_bar[active] = 1.0
        dv = chain.backward(rho_tilde, dv_bar)
        rho_new = oc_update(rho, dc, dv, config.V0, config.move, chain)
        change = float(np.abs(rho_new - rho)[active].max())
        report.change_history.append(change)
        rho = rho_new
        if (it + 1) % config.beta_double_every == 0 and beta < config.beta_max:
            beta = min(2 * beta, config.beta_max)
            chain.beta = beta
        rho_tilde, rho_bar = chain.forward(rho)
        if out_dir and config.snapshot_every and (it + 1) % config.snapshot_every == 0:
            volio.save_f32(out_dir / f"topopt_iter{it + 1:04d}.f32",
                           rho_bar.reshape(dom.dims, order="F").astype(np.float32),
                           dom.spacing, dom.origin)
        if callback:
            callback(it, rho, rho_bar, c)
        if change < config.change_tol and beta >= config.beta_max:
            break
    field = DensityField(rho, rho_tilde, rho_bar, dom)
    report.compliance = report.compliance_history[-1] if report.compliance_history else 0.0
    report.volume_fraction = field.volume_fraction()
    report.wall_s = time.time() - t0
    return field, report


def uniform_density_field(dom: VoxelDomain, vf: float) -> DensityField:
    """Reference design: uniform density at the given fraction (passive at 1)."""
    active = dom.active_elements()
    passive = (dom.labels == PASSIVE).ravel(order="F")
    rho = np.zeros(dom.n_elements)
    rho[active] = vf
    rho[passive] = 1.0
    return DensityField(rho, rho.copy(), rho.copy(), dom)
