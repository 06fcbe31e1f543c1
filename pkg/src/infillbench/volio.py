"""Binary volume and edge-graph file formats shared with the viewer.

Label volumes:  magic ``SGLDVOX1`` | 3*u32 dims | f32 spacing | 3*f32 origin
                | nx*ny*nz u8 labels, x-fastest order.
Float volumes:  magic ``SGLDF32\\0`` | u32 ncomp | 3*u32 dims | f32 spacing
                | 3*f32 origin | ncomp*nx*ny*nz f32, component-fastest per
                cell, cells in x-fastest order.
Edge graphs:    Wavefront OBJ with ``v x y z`` and ``l i j`` records (1-based).

All binary fields are little-endian.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VOX_MAGIC = b"SGLDVOX1"
F32_MAGIC = b"SGLDF32\0"


class FormatError(ValueError):
    pass


def save_labels(path, labels: np.ndarray, spacing: float, origin) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    nx, ny, nz = labels.shape
    with open(path, "wb") as fh:
        fh.write(VOX_MAGIC)
        fh.write(struct.pack("<3I", nx, ny, nz))
        fh.write(struct.pack("<f", float(spacing)))
        fh.write(struct.pack("<3f", *np.asarray(origin, dtype=np.float64)))
        fh.write(labels.ravel(order="F").tobytes())


def load_labels(path):
    data = Path(path).read_bytes()
    if data[:8] != VOX_MAGIC:
        raise FormatError(f"bad magic in {path}: {data[:8]!r}")
    nx, ny, nz = struct.unpack_from("<3I", data, 8)
    (spacing,) = struct.unpack_from("<f", data, 20)
    origin = np.asarray(struct.unpack_from("<3f", data, 24), dtype=np.float64)
    n = nx * ny * nz
    payload = data[36:]
    if len(payload) != n:
        raise FormatError(f"payload size {len(payload)} does not match dims "
                          f"{nx}x{ny}x{nz} = {n}")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape((nx, ny, nz), order="F")
    return labels.copy(), float(spacing), origin


def save_f32(path, values: np.ndarray, spacing: float, origin) -> None:
    """Write a float volume; `values` has shape (nx, ny, nz) or (nx, ny, nz, c)."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[..., None]
    nx, ny, nz, ncomp = arr.shape
    flat = arr.transpose(2, 1, 0, 3).reshape(-1, ncomp)
    with open(path, "wb") as fh:
        fh.write(F32_MAGIC)
        fh.write(struct.pack("<I", ncomp))
        fh.write(struct.pack("<3I", nx, ny, nz))
        fh.write(struct.pack("<f", float(spacing)))
        fh.write(struct.pack("<3f", *np.asarray(origin, dtype=np.float64)))
        fh.write(np.ascontiguousarray(flat, dtype="<f4").tobytes())


def load_f32(path):
    data = Path(path).read_bytes()
    if data[:8] != F32_MAGIC:
        raise FormatError(f"bad magic in {path}: {data[:8]!r}")
    (ncomp,) = struct.unpack_from("<I", data, 8)
    nx, ny, nz = struct.unpack_from("<3I", data, 12)
    (spacing,) = struct.unpack_from("<f", data, 24)
    origin = np.asarray(struct.unpack_from("<3f", data, 28), dtype=np.float64)
    n = nx * ny * nz * ncomp
    payload = np.frombuffer(data, dtype="<f4", count=-1, offset=40)
    if payload.size != n:
        raise FormatError(f"payload size {payload.size} != {n}")
    arr = payload.reshape(nz, ny, nx, ncomp).transpose(2, 1, 0, 3).astype(np.float32)
    if ncomp == 1:
        arr = arr[..., 0]
    return arr.copy(), float(spacing), origin


@dataclass
class EdgeGraph:
    """Lattice skeleton: node positions and undirected index-pair edges."""

    nodes: np.ndarray
    edges: np.ndarray
    radius_hint: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64).reshape(-1, 3)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.edges.size:
            if self.edges.max() >= len(self.nodes) or self.edges.min() < 0:
                raise FormatError("edge index out of range")
            if (self.edges[:, 0] == self.edges[:, 1]).any():
                raise FormatError("self-loop edge")
        self.edges = dedupe_edges(self.edges)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def dedupe_edges(edges: np.ndarray) -> np.ndarray:
    if not len(edges):
        return edges.reshape(0, 2)
    e = np.sort(edges, axis=1)
    return np.unique(e, axis=0)


def save_edge_graph(path, graph: EdgeGraph) -> None:
    with open(path, "w") as fh:
        for p in graph.nodes:
            fh.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        for a, b in graph.edges:
            fh.write(f"l {a + 1} {b + 1}\n")


def load_edge_graph(path) -> EdgeGraph:
    nodes, edges = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            nodes.append([float(x) for x in parts[1:4]])
        elif parts[0] == "l":
            idx = [int(p) - 1 for p in parts[1:]]
            for a, b in zip(idx[:-1], idx[1:]):
                edges.append((a, b))
    return EdgeGraph(np.asarray(nodes, dtype=np.float64).reshape(-1, 3),
                     np.asarray(edges, dtype=np.int64).reshape(-1, 2))
