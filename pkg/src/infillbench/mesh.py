"""Triangle mesh container, file I/O and inside/outside queries."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


@dataclass
class TriMesh:
    """Closed, orientable triangle surface.

    vertices: (nv, 3) float64 positions in model units
    triangles: (nt, 3) int vertex indices
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise MeshError("triangle index out of range")
        if self.triangles.size and self.triangles.min() < 0:
            raise MeshError("negative triangle index")

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def open_edges(self) -> list[tuple[int, int]]:
        """Undirected edges not shared by exactly two triangles."""
        tri = self.triangles
        edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        bad = uniq[counts != 2]
        return [tuple(int(v) for v in e) for e in bad]

    def check_closed(self):
        bad = self.open_edges()
        if bad:
            shown = ", ".join(f"({a},{b})" for a, b in bad[:8])
            more = "" if len(bad) <= 8 else f" (+{len(bad) - 8} more)"
            raise MeshError(f"mesh is not edge-manifold; offending edges: {shown}{more}")

    def volume(self) -> float:
        """Signed volume via the divergence theorem."""
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def winding_number(mesh: TriMesh, points: np.ndarray, batch: int = 2048) -> np.ndarray:
    """Generalized winding number of `points` w.r.t. the mesh surface.

    Solid-angle accumulation (van Oosterom & Strackee); ~1 inside a closed
    outward-oriented mesh, ~0 outside, and robust to small defects.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    va = mesh.vertices[mesh.triangles[:, 0]]
    vb = mesh.vertices[mesh.triangles[:, 1]]
    vc = mesh.vertices[mesh.triangles[:, 2]]
    out = np.empty(len(pts))
    for s in range(0, len(pts), batch):
        p = pts[s:s + batch]
        a = va[None, :, :] - p[:, None, :]
        b = vb[None, :, :] - p[:, None, :]
        c = vc[None, :, :] - p[:, None, :]
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        det = np.einsum("ptk,ptk->pt", a, np.cross(b, c))
        denom = (la * lb * lc
                 + np.einsum("ptk,ptk->pt", a, b) * lc
                 + np.einsum("ptk,ptk->pt", b, c) * la
                 + np.einsum("ptk,ptk->pt", c, a) * lb)
        omega = 2.0 * np.arctan2(det, denom)
        out[s:s + batch] = omega.sum(axis=1) / (4.0 * np.pi)
    return out


def segment_mesh_intersection(mesh: TriMesh, p0: np.ndarray, p1: np.ndarray):
    """First intersection of segment p0->p1 with the mesh (Moeller-Trumbore).

    Returns parameter t in [0, 1] or None.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    d = np.asarray(p1, dtype=np.float64) - p0
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    e1 = mesh.vertices[mesh.triangles[:, 1]] - v0
    e2 = mesh.vertices[mesh.triangles[:, 2]] - v0
    h = np.cross(d[None, :], e2)
    det = np.einsum("tk,tk->t", e1, h)
    eps = 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(np.abs(det) > eps, 1.0 / det, 0.0)
        s = p0[None, :] - v0
        u = np.einsum("tk,tk->t", s, h) * inv
        q = np.cross(s, e1)
        v = np.einsum("k,tk->t", d, q) * inv
        t = np.einsum("tk,tk->t", e2, q) * inv
    hit = (np.abs(det) > eps) & (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1 + 1e-12) \
        & (t >= -1e-12) & (t <= 1 + 1e-12)
    if not hit.any():
        return None
    return float(np.clip(t[hit].min(), 0.0, 1.0))


# ---------------------------------------------------------------- file I/O

def load_mesh(path: str | Path) -> TriMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".stl":
        return load_stl(path)
    if suffix == ".obj":
        return load_obj(path)
    raise MeshError(f"unsupported mesh format: {path.name}")


def _dedupe(raw_vertices: np.ndarray) -> TriMesh:
    verts, inverse = np.unique(raw_vertices.reshape(-1, 3), axis=0, return_inverse=True)
    tris = inverse.reshape(-1, 3)
    return TriMesh(verts, tris)


def load_stl(path: str | Path) -> TriMesh:
    data = Path(path).read_bytes()
    if data[:5] == b"solid" and b"facet" in data[:1024]:
        return _load_stl_ascii(data.decode("ascii", errors="replace"))
    if len(data) < 84:
        raise MeshError("truncated binary STL")
    (ntri,) = struct.unpack_from("<I", data, 80)
    expected = 84 + ntri * 50
    if len(data) < expected:
        raise MeshError(f"binary STL payload too short: {len(data)} < {expected}")
    rec = np.frombuffer(data, dtype=np.uint8, count=ntri * 50, offset=84).reshape(ntri, 50)
    floats = rec[:, :48].copy().view("<f4").reshape(ntri, 12)
    return _dedupe(floats[:, 3:12].astype(np.float64))


def _load_stl_ascii(text: str) -> TriMesh:
    coords = []
    for line in text.splitlines():
        parts = line.split()
        if parts and parts[0] == "vertex":
            coords.append([float(x) for x in parts[1:4]])
    if len(coords) % 3 != 0:
        raise MeshError("ASCII STL vertex count not a multiple of 3")
    return _dedupe(np.asarray(coords))


def save_stl(mesh: TriMesh, path: str | Path):
    tri = mesh.triangles
    a = mesh.vertices[tri[:, 0]]
    b = mesh.vertices[tri[:, 1]]
    c = mesh.vertices[tri[:, 2]]
    n = np.cross(b - a, c - a)
    lens = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.where(lens > 0, n / np.maximum(lens, 1e-300), 0.0)
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(tri)))
        for i in range(len(tri)):
            fh.write(np.asarray([n[i], a[i], b[i], c[i]], dtype="<f4").tobytes())
            fh.write(b"\0\0")


def load_obj(path: str | Path) -> TriMesh:
    verts, tris = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            if len(idx) != 3:
                raise MeshError("OBJ mesh must be triangles only")
            tris.append(idx)
    return TriMesh(np.asarray(verts, dtype=np.float64), np.asarray(tris, dtype=np.int64))


def save_obj(mesh: TriMesh, path: str | Path):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


# ------------------------------------------------------------- primitives

def make_box(vmin=(0, 0, 0), vmax=(1, 1, 1)) -> TriMesh:
    lo = np.asarray(vmin, dtype=np.float64)
    hi = np.asarray(vmax, dtype=np.float64)
    corners = np.array([[lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]],
                        [hi[0], hi[1], lo[2]], [lo[0], hi[1], lo[2]],
                        [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]],
                        [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]]])
    quads = [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4),
             (2, 3, 7, 6), (1, 2, 6, 5), (3, 0, 4, 7)]
    tris = []
    for q in quads:
        tris.append((q[0], q[1], q[2]))
        tris.append((q[0], q[2], q[3]))
    return TriMesh(corners, np.asarray(tris))


def make_icosphere(center=(0, 0, 0), radius=1.0, subdivisions=3) -> TriMesh:
    phi = (1 + 5 ** 0.5) / 2
    verts = np.array([[-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
                      [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
                      [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1]],
                     dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = list(verts)
    cache: dict[tuple[int, int], int] = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            m = verts[i] + verts[j]
            m /= np.linalg.norm(m)
            cache[key] = len(verts)
            verts.append(m)
        return cache[key]

    for _ in range(subdivisions):
        nxt = []
        for (i, j, k) in faces:
            a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            nxt += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = nxt
    v = np.asarray(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(v, np.asarray(faces))
