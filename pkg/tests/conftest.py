"""Shared builders for test presets and dense oracles."""
import numpy as np
import scipy.sparse as sp

from infillbench import domain as dm
from infillbench import fem


def solid_box(nx, ny, nz, spacing=1.0, origin=(0.0, 0.0, 0.0)):
    """All-solid box domain with classified boundary."""
    labels = np.full((nx, ny, nz), dm.SOLID, dtype=np.uint8)
    dom = dm.VoxelDomain(labels, spacing, np.asarray(origin, dtype=np.float64))
    dm.classify_boundary(dom)
    return dom


def cantilever(nx, ny, nz, spacing=1.0, force=(0.0, 0.0, -1.0)):
    """Solid box fixed at the x=0 face, loaded along the bottom edge of the
    free end (the desk-cantilever benchmark layout)."""
    dom = solid_box(nx, ny, nz, spacing)
    X, Y, Z = nx * spacing, ny * spacing, nz * spacing
    eps = 1e-6 * spacing
    dm.apply_fixation(dom, dm.RegionSelector(
        "box", [(-eps, -eps, -eps), (eps, Y + eps, Z + eps)]))
    dm.apply_load(dom, dm.RegionSelector(
        "box", [(X - eps, -eps, -eps), (X + eps, Y + eps, eps)]), force)
    return dom


def axial_bar(nx, ny, nz, spacing=1.0, total_force=1.0, nu=0.0):
    """Bar fixed at x=0 with a consistent uniform axial traction on the x=L
    face (each face element spreads its share over its 4 corner nodes, so
    corner/edge/interior nodes get the 1/4 : 1/2 : 1 weighting)."""
    dom = solid_box(nx, ny, nz, spacing)
    dom.nu = nu
    Y, Z = ny * spacing, nz * spacing
    eps = 1e-6 * spacing
    dm.apply_fixation(dom, dm.RegionSelector(
        "box", [(-eps, -eps, -eps), (eps, Y + eps, Z + eps)]))
    nnx, nny, _ = dom.node_dims
    per_elem_node = total_force / (ny * nz * 4.0)
    for iy in range(ny):
        for iz in range(nz):
            for dy in (0, 1):
                for dz in (0, 1):
                    node = nx + nnx * ((iy + dy) + nny * (iz + dz))
                    dom.loads[node, 0] += per_elem_node
    return dom


def assemble_dense(dom, moduli):
    """Dense global stiffness with identity rows/columns at constrained DOFs.

    Independent of the matrix-free apply path: plain per-element scatter of
    the generic 24x24 block.
    """
    op = fem.GridOperator(dom, moduli)
    Ke = fem.element_stiffness_matrix(1.0, dom.nu, dom.spacing)
    K = np.zeros((op.ndof, op.ndof))
    for edof, s in zip(op.edof, op.scale):
        K[np.ix_(edof, edof)] += s * Ke
    fixed = ~op.free
    K[fixed, :] = 0.0
    K[:, fixed] = 0.0
    K[fixed, fixed] = 1.0
    return K


def point_mesh_distance(mesh, points):
    """Unsigned distance from each point to the closest mesh triangle
    (Ericson's closest-point-on-triangle, vectorized over triangles)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    ab, ac = b - a, c - a
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        ap = p - a
        d1 = np.einsum("ij,ij->i", ab, ap)
        d2 = np.einsum("ij,ij->i", ac, ap)
        bp = p - b
        d3 = np.einsum("ij,ij->i", ab, bp)
        d4 = np.einsum("ij,ij->i", ac, bp)
        cp = p - c
        d5 = np.einsum("ij,ij->i", ab, cp)
        d6 = np.einsum("ij,ij->i", ac, cp)
        va = d3 * d6 - d5 * d4
        vb = d5 * d2 - d1 * d6
        vc = d1 * d4 - d3 * d2
        denom = np.where(va + vb + vc != 0, va + vb + vc, 1.0)
        v = np.clip(vb / denom, 0, 1)
        w = np.clip(vc / denom, 0, 1)
        close = a + ab * v[:, None] + ac * w[:, None]
        # vertex / edge regions
        close = np.where((d1 <= 0)[:, None] & (d2 <= 0)[:, None], a, close)
        close = np.where((d3 >= 0)[:, None] & (d4 <= d3)[:, None], b, close)
        close = np.where((d6 >= 0)[:, None] & (d5 <= d6)[:, None], c, close)
        t_ab = np.clip(np.where(d1 - d3 != 0, d1 / np.where(
            d1 - d3 != 0, d1 - d3, 1.0), 0.0), 0, 1)
        on_ab = (d1 >= 0) & (d3 <= 0) & (vc <= 0)
        close = np.where(on_ab[:, None], a + t_ab[:, None] * ab, close)
        t_ac = np.clip(np.where(d2 - d6 != 0, d2 / np.where(
            d2 - d6 != 0, d2 - d6, 1.0), 0.0), 0, 1)
        on_ac = (d2 >= 0) & (d6 <= 0) & (vb <= 0)
        close = np.where(on_ac[:, None], a + t_ac[:, None] * ac, close)
        num = (d4 - d3)
        den = (d4 - d3) + (d5 - d6)
        t_bc = np.clip(np.where(den != 0, num / np.where(den != 0, den, 1.0),
                                0.0), 0, 1)
        on_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        close = np.where(on_bc[:, None], b + t_bc[:, None] * (c - b), close)
        out[i] = np.linalg.norm(close - p, axis=1).min()
    return out


def inside_or_on(mesh, points, tol):
    """Generalized-winding inside test with an on-surface tolerance band."""
    from infillbench.mesh import winding_number
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    ok = winding_number(mesh, pts) >= 0.5 - 1e-6
    if not ok.all():
        ok[~ok] = point_mesh_distance(mesh, pts[~ok]) <= tol
    return ok


def assemble_sparse_unconstrained(dom, moduli):
    op = fem.GridOperator(dom, moduli)
    Ke = fem.element_stiffness_matrix(1.0, dom.nu, dom.spacing)
    blocks = op.scale[:, None, None] * Ke[None, :, :]
    rows = np.repeat(op.edof, 24, axis=1).ravel()
    cols = np.tile(op.edof, (1, 24)).ravel()
    return sp.coo_matrix((blocks.ravel(), (rows, cols)),
                         shape=(op.ndof, op.ndof)).tocsr()
