"""Principal stress line (PSL) tracing.

Traces hyperstreamlines of the stress tensor's eigenvector fields with RK4
integration and sign continuity, seeds them from a regular lattice with
distance-based seed removal, and matches a material budget by adapting the
seed-removal distance.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree

from .domain import VOID, VoxelDomain
from .stressfield import (StressTensorField, TensorInterpolator, TraceExit,
                          principal)
from .volio import EdgeGraph

MAJOR, MEDIUM, MINOR = "Major", "Medium", "Minor"
_BRANCH_RANK = {MAJOR: 0, MEDIUM: 1, MINOR: 2}

BRANCH_DEGENERACY_TOL = 1e-4       # relative adjacent-eigenvalue gap

BOUNDARY = "Boundary"
DEGENERATE = "Degenerate"
ANGLE_LIMIT = "AngleLimit"
MAX_LENGTH = "MaxLength"
_REASON_PRIORITY = [ANGLE_LIMIT, DEGENERATE, MAX_LENGTH, BOUNDARY]


@dataclass
class PSLConfig:
    step_h: float = 0.5            # RK4 step, in element (spacing) units
    angle_limit: float = 30.0      # max turning angle per step, degrees
    merge_distance: float = 2.0    # seed-removal distance epsilon, world units
    seed_spacing: float = 2.0      # seed lattice pitch, world units
    max_points: int = 4000         # per trace direction
    branches: tuple = (MAJOR, MINOR)

    def __post_init__(self):
        if self.step_h <= 0:
            raise ValueError("step h must be > 0")
        if not 0 < self.angle_limit < 90:
            raise ValueError("angle_limit must lie in (0, 90) degrees")


@dataclass
class PSL:
    polyline: np.ndarray           # (n, 3) ordered points
    branch: str
    stop_reason: str
    seed: np.ndarray = None
    meta: dict = dc_field(default_factory=dict)


def _branch_direction(interp: TensorInterpolator, p: np.ndarray, rank: int):
    """Unit eigenvector of the requested branch at p, or a stop reason."""
    try:
        sigma = interp(p)
    except TraceExit:
        return None, BOUNDARY
    dec = principal(sigma, ordering="signed")
    # degenerate for this branch iff its eigenvalue is not simple
    vals = dec.values
    scale = max(np.abs(vals).max(), 1e-300)
    gaps = [abs(vals[rank] - vals[j]) for j in range(3) if j != rank]
    if min(gaps) < BRANCH_DEGENERACY_TOL * scale:
        return None, DEGENERATE
    return dec.dirs[rank], None


def branch_degenerate_elements(field: StressTensorField, rank: int) -> np.ndarray:
    """Per-element mask of tensors whose branch eigenvalue is not simple,
    under the same relative gap rule the tracer applies to interpolated
    values. Traces never enter these elements."""
    dec = principal(field.sigma, ordering="signed")
    vals = np.atleast_2d(dec.values)
    scale = np.maximum(np.abs(vals).max(axis=-1), 1e-300)
    others = [j for j in range(3) if j != rank]
    gap = np.min(np.abs(vals[:, [rank]] - vals[:, others]), axis=-1)
    return gap < BRANCH_DEGENERACY_TOL * scale


def _trace_direction(interp: TensorInterpolator, dom: VoxelDomain,
                     seed: np.ndarray, rank: int, direction: np.ndarray,
                     config: PSLConfig, blocked: np.ndarray | None = None):
    """One-sided RK4 trace from `seed` starting along `direction`."""
    h = config.step_h * dom.spacing
    cos_limit = np.cos(np.radians(config.angle_limit))
    labels = dom.labels.ravel(order="F")
    pts = [seed.copy()]
    tangent = direction / np.linalg.norm(direction)
    for _ in range(config.max_points):
        p = pts[-1]

        def f(q, ref):
            v, why = _branch_direction(interp, q, rank)
            if v is None:
                raise TraceExit(why)
            return -v if np.dot(v, ref) < 0 else v

        try:
            k1 = f(p, tangent)
            k2 = f(p + 0.5 * h * k1, k1)
            k3 = f(p + 0.5 * h * k2, k2)
            k4 = f(p + h * k3, k3)
        except TraceExit as stop:
            return np.asarray(pts), str(stop)
        step = (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        norm = np.linalg.norm(step)
        if norm < 1e-12:
            return np.asarray(pts), DEGENERATE
        step /= norm
        new = p + h * step
        elem = dom.point_to_element(new)[0]
        if elem < 0 or labels[elem] == VOID:
            return np.asarray(pts), BOUNDARY
        if blocked is not None and blocked[elem]:
            return np.asarray(pts), DEGENERATE
        if np.dot(step, tangent) < cos_limit:
            return np.asarray(pts), ANGLE_LIMIT
        pts.append(new)
        tangent = step
    return np.asarray(pts), MAX_LENGTH


def trace_psl(seed, branch: str, field: StressTensorField,
              config: PSLConfig) -> PSL:
    """Bidirectional RK4 hyperstreamline through the interpolated tensor
    field. Stops on domain exit, a degenerate tensor, a per-step turning
    angle above the limit, or the point budget."""
    seed = np.asarray(seed, dtype=np.float64).reshape(3)
    dom = field.dom
    elem = dom.point_to_element(seed)[0]
    if elem < 0 or dom.labels.ravel(order="F")[elem] == VOID:
        raise ValueError(f"seed {seed} is not inside the solid domain")
    rank = _BRANCH_RANK[branch]
    blocked = branch_degenerate_elements(field, rank)
    if blocked[elem]:
        return PSL(seed[None, :], branch, DEGENERATE, seed=seed)
    interp = TensorInterpolator(field)
    v0, why = _branch_direction(interp, seed, rank)
    if v0 is None:
        return PSL(seed[None, :], branch, why, seed=seed)
    fwd, reason_f = _trace_direction(interp, dom, seed, rank, v0, config,
                                     blocked)
    bwd, reason_b = _trace_direction(interp, dom, seed, rank, -v0, config,
                                     blocked)
    polyline = np.concatenate([bwd[::-1], fwd[1:]]) if len(bwd) > 1 else fwd
    for reason in _REASON_PRIORITY:
        if reason in (reason_f, reason_b):
            return PSL(polyline, branch, reason, seed=seed)
    raise AssertionError("unreachable")


def seed_lattice(dom: VoxelDomain, spacing: float) -> np.ndarray:
    """Regular lattice of solid-interior seed points, lexicographic order."""
    lo = dom.origin + 0.5 * spacing
    hi = dom.origin + np.asarray(dom.dims) * dom.spacing
    axes = [np.arange(lo[k], hi[k], spacing) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    elem = dom.point_to_element(grid)
    labels = dom.labels.ravel(order="F")
    keep = (elem >= 0) & (labels[np.maximum(elem, 0)] != VOID)
    return grid[keep]


def build_psl_set(field: StressTensorField, dom: VoxelDomain,
                  config: PSLConfig) -> list[PSL]:
    """Seed-and-remove PSL growth: pop seeds in lattice order, trace every
    requested branch, drop AngleLimit traces, and remove remaining seeds
    within merge_distance of any accepted PSL point."""
    seeds = seed_lattice(dom, config.seed_spacing)
    alive = np.ones(len(seeds), dtype=bool)
    accepted: list[PSL] = []
    for i in range(len(seeds)):
        if not alive[i]:
            continue
        alive[i] = False
        for branch in config.branches:
            psl = trace_psl(seeds[i], branch, field, config)
            if psl.stop_reason == ANGLE_LIMIT or len(psl.polyline) < 2:
                continue
            accepted.append(psl)
            if alive.any():
                tree = cKDTree(psl.polyline)
                near = tree.query(seeds[alive])[0] <= config.merge_distance
                idx = np.flatnonzero(alive)
                alive[idx[near]] = False
    return accepted


def psl_graph(psls: list[PSL]) -> EdgeGraph:
    """Concatenate PSL polylines into a single edge graph."""
    nodes, edges, off = [], [], 0
    for psl in psls:
        n = len(psl.polyline)
        nodes.append(psl.polyline)
        edges.append(np.stack([np.arange(off, off + n - 1),
                               np.arange(off + 1, off + n)], axis=1))
        off += n
    if not nodes:
        return EdgeGraph(np.zeros((0, 3)), np.zeros((0, 2), dtype=np.int64))
    return EdgeGraph(np.concatenate(nodes), np.concatenate(edges))


def psl_infill(dom: VoxelDomain, field: StressTensorField, thickness: int,
               V0: float, config: PSLConfig | None = None):
    """PSL-guided infill: densify the PSL set (by shrinking the seed-removal
    distance) until the voxelized design meets the volume budget.

    Returns (EdgeGraph, MaterialField, trace).
    """
    from .rasterize import match_budget

    config = config or PSLConfig()
    if thickness < 1:
        raise ValueError("thickness must be at least 1 voxel layer")
    h = dom.spacing
    cache: dict[float, list[PSL]] = {}

    def generator(eps):
        if eps not in cache:
            cfg = PSLConfig(step_h=config.step_h,
                            angle_limit=config.angle_limit,
                            merge_distance=eps,
                            seed_spacing=min(config.seed_spacing, max(eps, h)),
                            max_points=config.max_points,
                            branches=config.branches)
            cache[eps] = build_psl_set(field, dom, cfg)
        return psl_graph(cache[eps])

    # smaller epsilon -> denser set -> more volume: invert the parameter
    lo, hi = 2.0 * h, max(config.merge_distance,
                          0.5 * float(np.linalg.norm(np.asarray(dom.dims) * h)))
    mat, eps, trace = match_budget(generator, dom, V0, thickness,
                                   lo=lo, hi=hi, decreasing=True)
    graph = generator(eps)
    tag = {"strategy": "psl", "epsilon": eps,
           "n_psl": len(cache[eps]), "thickness": thickness}
    graph.meta.update(tag)
    mat.provenance.update(tag)
    return graph, mat, trace
