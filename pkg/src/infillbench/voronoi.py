"""Stress-graded Voronoi infill: progressive Poisson-disk sampling with
von-Mises-derived radii, Delaunay tetrahedralization, winding-number
restriction, and clipped Voronoi dual extraction."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay as SciPyDelaunay
from scipy.spatial import cKDTree

from .domain import VOID, VoxelDomain
from .mesh import TriMesh, segment_mesh_intersection, winding_number
from .stressfield import icdf_normalize
from .volio import EdgeGraph

AUX_SPHERE = 0
HULL_VERTEX = 1
INTERIOR = 2


@dataclass
class SampleSet:
    points: np.ndarray          # (n, 3)
    radii: np.ndarray           # (n,)
    origin: np.ndarray          # (n,) tag: AUX_SPHERE | HULL_VERTEX | INTERIOR


def map_radius(vm_rank, r_hat: float, rho_ratio: float):
    """Poisson radius from a normalized stress rank: large radius at low
    stress, r_hat * rho_ratio at the highest stress."""
    if r_hat <= 0:
        raise ValueError("r_hat must be > 0")
    if not 0 < rho_ratio <= 1:
        raise ValueError("rho_ratio must lie in (0, 1]")
    return np.asarray(vm_rank) * (r_hat * rho_ratio - r_hat) + r_hat


def fibonacci_sphere(n: int, center, radius: float) -> np.ndarray:
    i = np.arange(n, dtype=np.float64)
    phi = np.pi * (3.0 - np.sqrt(5.0))
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = phi * i
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    return np.asarray(center) + radius * pts


class _RankInterpolator:
    """Trilinear interpolation of a per-element scalar with void-aware
    weight renormalization (nearest-material fallback)."""

    def __init__(self, dom: VoxelDomain, values: np.ndarray):
        self.dom = dom
        self.grid = np.asarray(values, dtype=np.float64).reshape(dom.dims, order="F")
        self.valid = (dom.labels != VOID).astype(np.float64)
        solid = np.flatnonzero(dom.labels.ravel(order="F") != VOID)
        self.solid_tree = cKDTree(dom.element_centers(solid))
        self.solid_vals = values.ravel()[solid]

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        dom = self.dom
        nx, ny, nz = dom.dims
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        q = (pts - dom.origin) / dom.spacing - 0.5
        base = np.floor(q).astype(int)
        frac = q - base
        acc = np.zeros(len(pts))
        tot = np.zeros(len(pts))
        for dx in range(2):
            for dy in range(2):
                for dz in range(2):
                    i = base + (dx, dy, dz)
                    ok = ((i >= 0).all(axis=1) & (i[:, 0] < nx)
                          & (i[:, 1] < ny) & (i[:, 2] < nz))
                    w = (np.where(dx, frac[:, 0], 1 - frac[:, 0])
                         * np.where(dy, frac[:, 1], 1 - frac[:, 1])
                         * np.where(dz, frac[:, 2], 1 - frac[:, 2]))
                    ic = np.clip(i, 0, [nx - 1, ny - 1, nz - 1])
                    w = np.where(ok, w * self.valid[ic[:, 0], ic[:, 1], ic[:, 2]], 0.0)
                    acc += w * self.grid[ic[:, 0], ic[:, 1], ic[:, 2]]
                    tot += w
        out = np.where(tot > 0, acc / np.maximum(tot, 1e-300), np.nan)
        miss = ~np.isfinite(out)
        if miss.any():
            _, nearest = self.solid_tree.query(pts[miss])
            out[miss] = self.solid_vals[nearest]
        return out


def graded_poisson_sample(dom: VoxelDomain, vm_field: np.ndarray,
                          mesh: TriMesh, r_hat: float, rho_ratio: float,
                          batch_n: int = 1024, seed: int = 0,
                          aux_count: int = 64,
                          empty_batch_limit: int = 20) -> SampleSet:
    """Progressive Poisson-disk sampling of the solid domain.

    `vm_field` is the raw per-element von Mises field (full grid); it is
    rank-normalized over the solid elements before radius mapping. Starts with auxiliary sphere samples and the hull vertices, then
    adds uniform candidate batches accepted under the graded disk criterion
    dist(s_i, s_j) >= min(R_i, R_j), until `empty_batch_limit` consecutive
    batches add nothing.
    """
    solid = np.flatnonzero(dom.labels.ravel(order="F") != VOID)
    if not len(solid):
        raise ValueError("empty solid domain")
    rng = np.random.default_rng(seed)
    vm = np.asarray(vm_field, dtype=np.float64).ravel()
    rank = np.zeros_like(vm)
    rank[solid] = icdf_normalize(vm[solid])
    interp = _RankInterpolator(dom, rank)
    lo, hi = mesh.bbox
    center = 0.5 * (lo + hi)
    circum = 0.5 * np.linalg.norm(hi - lo)
    aux = fibonacci_sphere(aux_count, center, 1.1 * circum)
    hull = mesh.vertices
    points = [aux, hull]
    radii = [np.full(len(aux), r_hat),
             map_radius(interp(hull), r_hat, rho_ratio)]
    tags = [np.full(len(aux), AUX_SPHERE), np.full(len(hull), HULL_VERTEX)]
    pts = np.concatenate(points)
    rad = np.concatenate(radii)
    tag = np.concatenate(tags)

    solid_centers = dom.element_centers(solid)
    empty_batches = 0
    h = dom.spacing
    while empty_batches < empty_batch_limit:
        # uniform candidates inside randomly chosen solid elements
        pick = rng.integers(0, len(solid), batch_n)
        cand = solid_centers[pick] + (rng.random((batch_n, 3)) - 0.5) * h
        cand_r = map_radius(interp(cand), r_hat, rho_ratio)
        tree = cKDTree(pts)
        # vectorized conflict test against the committed set
        neigh = tree.query_ball_point(cand, cand_r, workers=-1)
        ok = np.ones(batch_n, dtype=bool)
        for i, nb in enumerate(neigh):
            if nb:
                d = np.linalg.norm(cand[i] - pts[nb], axis=1)
                if (d < np.minimum(cand_r[i], rad[nb])).any():
                    ok[i] = False
        new_pts, new_r = [], []
        for i in np.flatnonzero(ok):     # serialize intra-batch conflicts
            if new_pts:
                d = np.linalg.norm(cand[i] - np.asarray(new_pts), axis=1)
                if (d < np.minimum(cand_r[i], np.asarray(new_r))).any():
                    continue
            new_pts.append(cand[i])
            new_r.append(cand_r[i])
        if new_pts:
            pts = np.concatenate([pts, np.asarray(new_pts)])
            rad = np.concatenate([rad, np.asarray(new_r)])
            tag = np.concatenate([tag, np.full(len(new_pts), INTERIOR)])
            empty_batches = 0
        else:
            empty_batches += 1
    return SampleSet(pts, rad, tag)


@dataclass
class DelaunayComplex:
    points: np.ndarray
    tets: np.ndarray            # (nt, 4) vertex indices
    neighbors: np.ndarray       # (nt, 4) adjacent tet per face, -1 on hull
    keep: np.ndarray = None     # set by restrict_delaunay


def delaunay(samples: SampleSet) -> DelaunayComplex:
    """Delaunay tetrahedralization of all samples (Qhull-backed)."""
    pts = samples.points
    if len(pts) < 5:
        raise ValueError("need at least 5 points")
    try:
        tri = SciPyDelaunay(pts)
    except Exception:
        warnings.warn("degenerate point set: retrying with joggled input")
        tri = SciPyDelaunay(pts, qhull_options="QJ")
    return DelaunayComplex(pts, tri.simplices.astype(np.int64),
                           tri.neighbors.astype(np.int64))


def circumcenters(points: np.ndarray, tets: np.ndarray) -> np.ndarray:
    a = points[tets[:, 0]]
    rhs = np.empty((len(tets), 3))
    mat = np.empty((len(tets), 3, 3))
    for k in range(3):
        d = points[tets[:, k + 1]] - a
        mat[:, k, :] = 2.0 * d
        rhs[:, k] = np.einsum("ij,ij->i", d, d) + 2.0 * np.einsum("ij,ij->i", d, a)
    return np.linalg.solve(mat, rhs[..., None])[..., 0]


def restrict_delaunay(complex_: DelaunayComplex, mesh: TriMesh) -> DelaunayComplex:
    """Keep tetrahedra whose centroid lies inside the mesh."""
    centroids = complex_.points[complex_.tets].mean(axis=1)
    complex_.keep = winding_number(mesh, centroids) >= 0.5
    return complex_


def voronoi_dual_and_clip(complex_: DelaunayComplex, mesh: TriMesh) -> EdgeGraph:
    """Voronoi skeleton dual to the restricted complex, clipped to the hull.

    Voronoi vertices are circumcenters of tets with at least one kept
    endpoint-tet; edges join circumcenters of face-adjacent tets where at
    least one side is kept. Edges crossing the hull are cut at the mesh;
    edges fully outside are omitted.
    """
    if complex_.keep is None or not complex_.keep.any():
        raise ValueError("restricted complex is empty")
    keep = complex_.keep
    nb = complex_.neighbors
    nt = len(complex_.tets)
    cc = circumcenters(complex_.points, complex_.tets)
    pairs = []
    for face in range(4):
        n = nb[:, face]
        t = np.arange(nt)
        valid = (n >= 0) & (keep[t] | keep[np.maximum(n, 0)])
        a = np.minimum(t[valid], n[valid])
        b = np.maximum(t[valid], n[valid])
        pairs.append(np.stack([a, b], axis=1))
    pairs = np.unique(np.concatenate(pairs), axis=0)
    inside = winding_number(mesh, cc) >= 0.5
    nodes: list[np.ndarray] = []
    node_of_tet: dict[int, int] = {}
    edges = []

    def tet_node(ti):
        if ti not in node_of_tet:
            node_of_tet[ti] = len(nodes)
            nodes.append(cc[ti])
        return node_of_tet[ti]

    for a, b in pairs:
        pa, pb = cc[a], cc[b]
        ia, ib = inside[a], inside[b]
        if ia and ib:
            edges.append((tet_node(a), tet_node(b)))
        elif ia != ib:
            src, dst = (a, b) if ia else (b, a)
            t = segment_mesh_intersection(mesh, cc[src], cc[dst])
            if t is None or t <= 1e-9:
                continue
            clip = cc[src] + t * (cc[dst] - cc[src])
            ni = len(nodes)
            nodes.append(clip)
            edges.append((tet_node(src), ni))
    if not edges:
        raise ValueError("clipped Voronoi skeleton is empty")
    return EdgeGraph(np.asarray(nodes), np.asarray(edges, dtype=np.int64))


def generate_voronoi_infill(dom: VoxelDomain, vm_field: np.ndarray,
                            mesh: TriMesh, r_hat: float, rho_ratio: float,
                            seed: int = 0, batch_n: int = 1024) -> EdgeGraph:
    """Full pipeline: graded sampling -> Delaunay -> restriction -> clipped
    Voronoi dual."""
    samples = graded_poisson_sample(dom, vm_field, mesh, r_hat, rho_ratio,
                                    batch_n=batch_n, seed=seed)
    cx = delaunay(samples)
    cx = restrict_delaunay(cx, mesh)
    graph = voronoi_dual_and_clip(cx, mesh)
    graph.meta.update({"strategy": "voronoi", "r_hat": r_hat,
                       "rho_ratio": rho_ratio, "seed": seed,
                       "n_samples": len(samples.points)})
    return graph
