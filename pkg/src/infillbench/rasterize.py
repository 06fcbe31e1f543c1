"""Edge-graph voxelization: parametric DDA traversal, 26-neighbor
thickening, passive-shell union, and dichotomy budget matching."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .domain import PASSIVE, VOID, VoxelDomain
from .volio import EdgeGraph

ELEMENT_CAP = 64_000_000
_STRUCT26 = np.ones((3, 3, 3), dtype=bool)


@dataclass
class MaterialField:
    """Binary per-element occupancy on the preset grid."""

    rho: np.ndarray                # (n_elements,) in {0.0, 1.0}, x-fastest
    dom: VoxelDomain
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.float64).ravel()
        labels = self.dom.labels.ravel(order="F")
        assert (self.rho[labels == VOID] == 0).all(), "material in void"
        assert (self.rho[labels == PASSIVE] == 1).all(), "passive not solid"

    def volume_fraction(self) -> float:
        active = self.dom.labels.ravel(order="F") != VOID
        return float(self.rho[active].sum() / active.sum())


def voxelize_edge(a, b, dom: VoxelDomain) -> np.ndarray:
    """Flat indices of every grid element traversed by segment a-b
    (parametric DDA; includes the endpoints' containing elements)."""
    a = np.asarray(a, dtype=np.float64).reshape(3)
    b = np.asarray(b, dtype=np.float64).reshape(3)
    h = dom.spacing
    dims = np.asarray(dom.dims)
    lo = dom.origin
    hi = dom.origin + dims * h
    d = b - a
    # clip the segment to the grid box (slab method)
    t0, t1 = 0.0, 1.0
    for k in range(3):
        if abs(d[k]) < 1e-300:
            if a[k] < lo[k] or a[k] > hi[k]:
                return np.empty(0, dtype=np.int64)
            continue
        ta = (lo[k] - a[k]) / d[k]
        tb = (hi[k] - a[k]) / d[k]
        t0 = max(t0, min(ta, tb))
        t1 = min(t1, max(ta, tb))
    if t0 > t1:
        return np.empty(0, dtype=np.int64)
    p0 = a + t0 * d
    p1 = a + t1 * d
    cell = np.clip(np.floor((p0 - lo) / h).astype(np.int64), 0, dims - 1)
    end = np.clip(np.floor((p1 - lo) / h).astype(np.int64), 0, dims - 1)
    step = np.sign(d).astype(np.int64)
    t_max = np.full(3, np.inf)
    t_delta = np.full(3, np.inf)
    for k in range(3):
        if step[k] != 0:
            nxt = lo[k] + (cell[k] + (step[k] > 0)) * h
            t_max[k] = (nxt - a[k]) / d[k]
            t_delta[k] = h / abs(d[k])
    out = [cell.copy()]
    # worst-case crossings bound the loop
    for _ in range(int(np.abs(end - cell).sum()) + 8):
        if (cell == end).all():
            break
        k = int(np.argmin(t_max))
        if t_max[k] > t1 + 1e-12:
            break
        cell[k] += step[k]
        t_max[k] += t_delta[k]
        if (cell < 0).any() or (cell >= dims).any():
            break
        out.append(cell.copy())
    cells = np.asarray(out)
    return cells[:, 0] + dims[0] * (cells[:, 1] + dims[1] * cells[:, 2])


def thicken(elements: np.ndarray, layers: int, dom: VoxelDomain) -> np.ndarray:
    """Per layer, add all 26-neighbors of the set, clipped to non-void."""
    if layers < 0:
        raise ValueError("layers must be >= 0")
    elements = np.asarray(elements, dtype=np.int64)
    if layers == 0 or not len(elements):
        return np.unique(elements)
    nx, ny, _ = dom.dims
    ix, iy, iz = elements % nx, (elements // nx) % ny, elements // (nx * ny)
    grid = np.zeros(dom.dims, dtype=bool)
    grid[ix, iy, iz] = True
    allowed = dom.labels != VOID
    for _ in range(layers):
        grid = ndimage.binary_dilation(grid, structure=_STRUCT26) & allowed
        grid[ix, iy, iz] = True                  # seeds stay even if in void
    return np.flatnonzero(grid.ravel(order="F"))


def voxelize_graph(graph: EdgeGraph, dom: VoxelDomain,
                   thickness_layers: int = 1) -> MaterialField:
    """Union of voxelized+thickened edges and the passive shell, clipped to
    non-void elements."""
    labels = dom.labels.ravel(order="F")
    occupied = np.zeros(dom.n_elements, dtype=bool)
    for i, j in graph.edges:
        occupied[voxelize_edge(graph.nodes[i], graph.nodes[j], dom)] = True
    for p in graph.nodes:      # isolated nodes still deposit material
        e = dom.point_to_element(p)[0]
        if e >= 0:
            occupied[e] = True
    if occupied.any():
        occupied[thicken(np.flatnonzero(occupied), thickness_layers, dom)] = True
    occupied[labels == PASSIVE] = True
    occupied &= labels != VOID
    if not occupied.any():
        raise ValueError("empty design: no edges and no passive shell")
    return MaterialField(occupied.astype(np.float64), dom,
                         {"strategy": graph.meta.get("strategy", "import"),
                          "thickness_layers": thickness_layers,
                          **graph.meta})


def match_budget(generator, dom: VoxelDomain, V0: float,
                 thickness_layers: int, lo: float, hi: float,
                 decreasing: bool = False, tol: float = 0.02,
                 max_iters: int = 12):
    """Dichotomy on the generator parameter until the voxelized volume
    fraction lands within +-tol of V0.

    `generator(param) -> EdgeGraph`; volume is assumed monotone in the
    parameter (increasing, or decreasing with `decreasing=True`).
    Returns (MaterialField, parameter, trace) where trace is the list of
    (parameter, volume_fraction) visited; non-monotone traces and bracket
    failures are flagged in the returned field's provenance.
    """
    labels = dom.labels.ravel(order="F")
    shell_vf = float((labels == PASSIVE).sum() / (labels != VOID).sum())
    if V0 < shell_vf - 1e-12:
        raise ValueError(f"budget {V0:.4f} below passive shell fraction "
                         f"{shell_vf:.4f} (minimum achievable)")

    def run(param):
        return voxelize_graph(generator(param), dom, thickness_layers)

    # orient so that volume increases with the internal parameter
    sgn = -1.0 if decreasing else 1.0
    a, b = (sgn * hi, sgn * lo) if decreasing else (lo, hi)
    trace = []
    best = None

    def visit(param):
        nonlocal best
        f = run(sgn * param)
        vf = f.volume_fraction()
        trace.append((sgn * param, vf))
        if best is None or abs(vf - V0) < abs(best[1] - V0):
            best = (f, vf, sgn * param)
        return vf

    flags = []
    va = visit(a)
    if abs(va - V0) <= tol:
        vb = va                         # sparse end already meets the budget
    else:
        vb = visit(b)
    if vb < V0 - tol:
        raise ValueError(f"budget {V0:.4f} unreachable: max achievable "
                         f"volume fraction is {vb:.4f}")
    if len(trace) > 1 and abs(vb - va) < 1e-12:
        flags.append("bracket_failure")
    elif abs(best[1] - V0) > tol:
        for _ in range(max_iters):
            if abs(best[1] - V0) <= tol:
                break
            m = 0.5 * (a + b)
            vm = visit(m)
            if vm < V0:
                a, va = m, vm
            else:
                b, vb = m, vm
    vols = [v for _, v in sorted(trace, key=lambda r: sgn * r[0])]
    if any(v2 < v1 - 1e-12 for v1, v2 in zip(vols, vols[1:])):
        flags.append("non_monotone")
    field, vf, param = best
    field.provenance.update({"budget": V0, "achieved_vf": vf,
                             "parameter": param, "flags": flags,
                             "trace": trace})
    if abs(vf - V0) > tol and "bracket_failure" not in flags:
        warnings.warn(f"budget not met: |{vf:.4f} - {V0:.4f}| > {tol}")
    return field, param, trace


def auto_resolution(graph: EdgeGraph, min_voxels_per_edge_diameter: int = 4,
                    thickness_world: float | None = None,
                    element_cap: int = ELEMENT_CAP) -> int:
    """Longest-axis resolution so the median intended edge thickness spans
    at least `min_voxels_per_edge_diameter` elements."""
    if not len(graph.nodes):
        raise ValueError("empty graph")
    if thickness_world is None:
        if graph.radius_hint is None:
            raise ValueError("no thickness hint on graph")
        thickness_world = 2.0 * float(np.median(graph.radius_hint))
    ext = graph.nodes.max(axis=0) - graph.nodes.min(axis=0)
    longest = float(ext.max())
    res = int(np.ceil(min_voxels_per_edge_diameter * longest / thickness_world))
    ratio = ext / longest
    while np.prod(np.maximum(np.ceil(ratio * res), 1)) > element_cap:
        res = int(res * 0.95)
    achieved = res * thickness_world / longest
    if achieved < min_voxels_per_edge_diameter:
        warnings.warn(f"element cap reached: {achieved:.2f} voxels per edge "
                      f"diameter (requested {min_voxels_per_edge_diameter})")
    return res
