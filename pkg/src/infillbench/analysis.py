"""Design evaluation and comparison.

Any design (a per-element density field or a voxelized lattice) is put
through one elasticity solve; reports compliance, von Mises, rotated-load
variants and stress-direction deviation against the fully-solid baseline.
"""
from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field as dc_field, asdict

import numpy as np

from .domain import VOID, VoxelDomain
from .fem import SolverConfig, simp_modulus, solve
from .stressfield import StressTensorField, element_stress, principal, von_mises

CSV_COLUMNS = ("strategy", "vf", "compliance", "dev_mean", "dev_p90",
               "solve_iters", "wall_s")


@dataclass
class DesignReport:
    strategy: str
    params: dict
    volume_fraction: float
    compliance: float
    compliance_history: list = dc_field(default_factory=list)
    solver_stats: dict = dc_field(default_factory=dict)
    export_paths: dict = dc_field(default_factory=dict)
    load_case: tuple = (0.0, 0.0, 0.0)      # Euler angles, degrees
    preset_id: str = ""
    deviation_stats: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.compliance <= 0:
            raise ValueError("compliance must be > 0 for nonzero loads")
        if not 0 < self.volume_fraction <= 1:
            raise ValueError("volume fraction must lie in (0, 1]")

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2, sort_keys=True, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass
class DeviationField:
    values: np.ndarray           # (n_elements,), 0 outside the compared set
    compared: np.ndarray         # bool: both designs have material here
    degenerate: np.ndarray       # bool: excluded from statistics

    def stats(self) -> dict:
        ok = self.compared & ~self.degenerate
        if not ok.any():
            return {"mean": 0.0, "p90": 0.0, "n": 0,
                    "n_degenerate": int(self.degenerate.sum())}
        v = self.values[ok]
        return {"mean": float(v.mean()), "p90": float(np.percentile(v, 90)),
                "n": int(ok.sum()), "n_degenerate": int(self.degenerate.sum())}


def _design_density(field) -> np.ndarray:
    """Per-element physical density of a MaterialField or DensityField."""
    if hasattr(field, "rho_bar"):
        return np.asarray(field.rho_bar, dtype=np.float64)
    return np.asarray(field.rho, dtype=np.float64)


def _design_tag(field) -> tuple[str, dict]:
    prov = getattr(field, "provenance", None) or getattr(field, "meta", {})
    strategy = prov.get("strategy", "density") if prov else "density"
    params = {k: v for k, v in (prov or {}).items()
              if isinstance(v, (int, float, str, bool))}
    return strategy, params


def evaluate_design(field, dom: VoxelDomain,
                    config: SolverConfig | None = None,
                    loads: np.ndarray | None = None,
                    load_case=(0.0, 0.0, 0.0)):
    """One solve of the design: returns (DesignReport, StressTensorField,
    von Mises per element). Compliance is f.u."""
    if len(_design_density(field)) != dom.n_elements:
        raise ValueError("design grid does not match the preset grid")
    config = config or SolverConfig()
    rho = _design_density(field)
    moduli = simp_modulus(rho, E0=dom.E0)
    f = (dom.loads if loads is None else loads).ravel()
    t0 = time.perf_counter()
    res = solve(dom, moduli, f, config)
    wall = time.perf_counter() - t0
    compliance = float(f @ res.u)
    sigma = element_stress(res.u, dom, moduli)
    vm = von_mises(sigma.sigma)
    active = dom.labels.ravel(order="F") != VOID
    strategy, params = _design_tag(field)
    vf = float(rho[active].sum() / active.sum())
    report = DesignReport(
        strategy=strategy, params=params, volume_fraction=vf,
        compliance=compliance, load_case=tuple(float(a) for a in load_case),
        solver_stats={"iterations": res.iterations,
                      "converged": bool(res.converged),
                      "residual": float(res.residuals[-1]),
                      "wall_s": wall},
        preset_id=getattr(dom, "mesh_path", "") or "")
    return report, sigma, vm


def rotation_matrix(euler_deg) -> np.ndarray:
    """Intrinsic x -> y -> z rotation: R = Rz(tz) Ry(ty) Rx(tx)."""
    tx, ty, tz = np.radians(np.asarray(euler_deg, dtype=np.float64))
    cx, sx = np.cos(tx), np.sin(tx)
    cy, sy = np.cos(ty), np.sin(ty)
    cz, sz = np.cos(tz), np.sin(tz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def variable_load(field, dom: VoxelDomain, euler_deg,
                  config: SolverConfig | None = None) -> DesignReport:
    """Re-evaluate the design with every nodal force rotated by the Euler
    triple (degrees); magnitudes are preserved."""
    if not np.abs(dom.loads).sum() > 0:
        raise ValueError("preset has no loads")
    R = rotation_matrix(euler_deg)
    rotated = dom.loads.reshape(-1, 3) @ R.T
    report, _, _ = evaluate_design(field, dom, config, loads=rotated,
                                   load_case=euler_deg)
    return report


def deviation_field(solid_stress: StressTensorField,
                    design_stress: StressTensorField,
                    design_mask: np.ndarray,
                    degeneracy_tol: float = 1e-4) -> DeviationField:
    """Per-element d = 1 - |v_solid . v_design| of unit dominant principal
    directions (absolute-value ordering). Elements where either tensor has
    a near-tied dominant magnitude are flagged degenerate and excluded."""
    if solid_stress.sigma.shape != design_stress.sigma.shape:
        raise ValueError("stress fields live on different grids")
    mask = np.asarray(design_mask, dtype=bool).ravel()
    values = np.zeros(len(mask))
    degenerate = np.zeros(len(mask), dtype=bool)
    if mask.any():
        va, da = _dominant(solid_stress.sigma[mask], degeneracy_tol)
        vb, db = _dominant(design_stress.sigma[mask], degeneracy_tol)
        d = 1.0 - np.abs(np.einsum("ij,ij->i", va, vb))
        values[mask] = np.clip(d, 0.0, 1.0)
        degenerate[mask] = da | db
        values[degenerate] = 0.0
    return DeviationField(values, mask, degenerate)


def _dominant(sigma: np.ndarray, tol: float):
    dec = principal(sigma, ordering="absolute")
    mag = np.abs(dec.values)
    scale = np.maximum(mag[:, 0], 1e-300)
    degenerate = (mag[:, 0] - mag[:, 1]) < tol * scale
    zero = mag[:, 0] <= 1e-300
    return dec.dirs[:, 0, :], degenerate | zero


def compare_designs(reports: list[DesignReport], path=None) -> str:
    """CSV comparison, rows sorted ascending by compliance."""
    if not reports:
        raise ValueError("no reports")
    presets = {r.preset_id for r in reports}
    if len(presets) > 1:
        raise ValueError(f"reports mix presets: {sorted(presets)}")
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in sorted(reports, key=lambda r: r.compliance):
        dev = r.deviation_stats or {}
        buf.write("%s,%.6f,%.8g,%.6f,%.6f,%d,%.3f\n" % (
            r.strategy, r.volume_fraction, r.compliance,
            dev.get("mean", 0.0), dev.get("p90", 0.0),
            int(r.solver_stats.get("iterations", 0)),
            float(r.solver_stats.get("wall_s", 0.0))))
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
