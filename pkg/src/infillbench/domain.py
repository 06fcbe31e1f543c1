"""Hexahedral simulation grid: voxelization, boundary conditions, presets."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import volio
from .mesh import TriMesh, load_mesh, winding_number

VOID, SOLID, BOUNDARY, PASSIVE = 0, 1, 2, 3

# offsets of the 8 element corners, x-fastest tensor order
CORNER_OFFSETS = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0],
                           [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]], dtype=np.int64)

DEFAULT_ELEMENT_CAP = 64_000_000


class DomainError(ValueError):
    pass


@dataclass
class RegionSelector:
    """Axis-aligned box or sphere used to pick boundary nodes."""

    shape: str                      # "box" | "sphere"
    params: np.ndarray              # box: (2,3) min/max; sphere: (4,) cx,cy,cz,r

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.shape == "box":
            self.params = self.params.reshape(2, 3)
            if (self.params[0] > self.params[1]).any():
                raise DomainError("box selector min > max")
        elif self.shape == "sphere":
            self.params = self.params.reshape(4)
            if self.params[3] <= 0:
                raise DomainError("sphere selector radius must be > 0")
        else:
            raise DomainError(f"unknown selector shape {self.shape!r}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if self.shape == "box":
            lo, hi = self.params
            return ((pts >= lo - 1e-12) & (pts <= hi + 1e-12)).all(axis=1)
        center, r = self.params[:3], self.params[3]
        return np.linalg.norm(pts - center, axis=1) <= r + 1e-12

    def to_dict(self) -> dict:
        return {"shape": self.shape, "params": self.params.ravel().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionSelector":
        return cls(d["shape"], np.asarray(d["params"], dtype=np.float64))

    @classmethod
    def parse(cls, spec: str) -> "RegionSelector":
        """Parse ``box:x0,y0,z0,x1,y1,z1`` or ``sphere:cx,cy,cz,r``."""
        kind, _, rest = spec.partition(":")
        vals = np.asarray([float(v) for v in rest.split(",")])
        return cls(kind.strip(), vals)

    def __repr__(self):
        return f"{self.shape}:{','.join(f'{v:g}' for v in self.params.ravel())}"


@dataclass
class VoxelDomain:
    """Cartesian element grid with labels, fixations and nodal loads."""

    labels: np.ndarray              # (nx, ny, nz) uint8
    spacing: float
    origin: np.ndarray
    fixed: np.ndarray = None        # (nnodes,) bool
    loads: np.ndarray = None        # (nnodes, 3) float
    E0: float = 1.0
    nu: float = 0.3
    mesh_path: str | None = None
    fixation_selectors: list = field(default_factory=list)
    load_selectors: list = field(default_factory=list)   # (selector, force) pairs

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.fixed is None:
            self.fixed = np.zeros(self.n_nodes, dtype=bool)
        if self.loads is None:
            self.loads = np.zeros((self.n_nodes, 3), dtype=np.float64)

    # ---------------------------------------------------------- geometry
    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.labels.shape)

    @property
    def node_dims(self) -> tuple[int, int, int]:
        nx, ny, nz = self.dims
        return nx + 1, ny + 1, nz + 1

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_dims))

    def copy(self) -> "VoxelDomain":
        return VoxelDomain(self.labels.copy(), self.spacing, self.origin.copy(),
                           self.fixed.copy(), self.loads.copy(), self.E0, self.nu,
                           self.mesh_path,
                           list(self.fixation_selectors),
                           list(self.load_selectors))

    def node_positions(self, node_ids=None) -> np.ndarray:
        nnx, nny, nnz = self.node_dims
        if node_ids is None:
            node_ids = np.arange(self.n_nodes)
        node_ids = np.asarray(node_ids)
        ix = node_ids % nnx
        iy = (node_ids // nnx) % nny
        iz = node_ids // (nnx * nny)
        return self.origin + self.spacing * np.stack([ix, iy, iz], axis=-1)

    def element_centers(self, elem_ids=None) -> np.ndarray:
        nx, ny, nz = self.dims
        if elem_ids is None:
            elem_ids = np.arange(self.n_elements)
        elem_ids = np.asarray(elem_ids)
        ix = elem_ids % nx
        iy = (elem_ids // nx) % ny
        iz = elem_ids // (nx * ny)
        return self.origin + self.spacing * (np.stack([ix, iy, iz], axis=-1) + 0.5)

    def element_node_ids(self, elem_ids) -> np.ndarray:
        """(n, 8) node indices of the given elements, corner tensor order."""
        nx, ny, nz = self.dims
        nnx, nny = nx + 1, ny + 1
        elem_ids = np.asarray(elem_ids)
        ix = elem_ids % nx
        iy = (elem_ids // nx) % ny
        iz = elem_ids // (nx * ny)
        cx = ix[:, None] + CORNER_OFFSETS[None, :, 0]
        cy = iy[:, None] + CORNER_OFFSETS[None, :, 1]
        cz = iz[:, None] + CORNER_OFFSETS[None, :, 2]
        return cx + nnx * (cy + nny * cz)

    def active_elements(self) -> np.ndarray:
        """Flat indices (x-fastest) of non-void elements."""
        return np.flatnonzero(self.labels.ravel(order="F") != VOID)

    def solid_mask(self) -> np.ndarray:
        return self.labels != VOID

    def point_to_element(self, points: np.ndarray) -> np.ndarray:
        """Flat element index containing each point; -1 outside the grid."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        idx = np.floor((pts - self.origin) / self.spacing).astype(np.int64)
        nx, ny, nz = self.dims
        ok = (idx >= 0).all(axis=1) & (idx[:, 0] < nx) & (idx[:, 1] < ny) & (idx[:, 2] < nz)
        flat = idx[:, 0] + nx * (idx[:, 1] + ny * idx[:, 2])
        return np.where(ok, flat, -1)

    # ------------------------------------------------------ housekeeping
    def check(self):
        active = self.labels.ravel(order="F") != VOID
        owned = np.zeros(self.n_nodes, dtype=bool)
        enodes = self.element_node_ids(np.flatnonzero(active))
        owned[enodes.ravel()] = True
        if (self.fixed & ~owned).any():
            raise DomainError("fixed node belongs only to void elements")
        loaded = np.abs(self.loads).sum(axis=1) > 0
        if (loaded & ~owned).any():
            raise DomainError("loaded node belongs only to void elements")


# ----------------------------------------------------------- construction

def voxelize_mesh(mesh: TriMesh, resolution: int,
                  element_cap: int = DEFAULT_ELEMENT_CAP) -> VoxelDomain:
    """Voxelize a closed mesh: centroid-inside test via winding numbers,
    one layer of void padding, boundary classification."""
    if resolution < 4:
        raise DomainError("resolution must be >= 4")
    mesh.check_closed()
    lo, hi = mesh.bbox
    extent = hi - lo
    spacing = float(extent.max()) / resolution
    inner = np.maximum(np.ceil(extent / spacing - 1e-9).astype(int), 1)
    dims = inner + 2                       # one void layer on all sides
    if int(np.prod(dims)) > element_cap:
        raise DomainError(f"{int(np.prod(dims))} elements exceed cap {element_cap}")
    origin = lo - spacing
    nx, ny, nz = dims
    centers = origin + spacing * (np.stack(np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"),
        axis=-1).reshape(-1, 3) + 0.5)
    inside = winding_number(mesh, centers) >= 0.5
    labels = np.where(inside, SOLID, VOID).astype(np.uint8).reshape(nx, ny, nz)
    labels[0, :, :] = VOID
    labels[-1, :, :] = VOID
    labels[:, 0, :] = VOID
    labels[:, -1, :] = VOID
    labels[:, :, 0] = VOID
    labels[:, :, -1] = VOID
    dom = VoxelDomain(labels, spacing, origin)
    return classify_boundary(dom)


def load_voxel_model(path) -> VoxelDomain:
    labels, spacing, origin = volio.load_labels(path)
    if not (labels != VOID).any():
        raise DomainError("empty domain: voxel model contains no solid elements")
    dom = VoxelDomain(labels, spacing, origin)
    return classify_boundary(dom)


def save_voxel_model(dom: VoxelDomain, path) -> None:
    volio.save_labels(path, dom.labels, dom.spacing, dom.origin)


# ------------------------------------------------------------- operations

_FULL26 = np.ones((3, 3, 3), dtype=bool)


def classify_boundary(dom: VoxelDomain) -> VoxelDomain:
    """Relabel solid elements with any void 26-neighbor (or grid border)
    as boundary. Passive labels are preserved. Idempotent."""
    if not (dom.labels != VOID).any():
        raise DomainError("domain has no solid elements")
    void = np.pad(dom.labels == VOID, 1, constant_values=True)
    near_void = ndimage.binary_dilation(void, structure=_FULL26)[1:-1, 1:-1, 1:-1]
    material = (dom.labels == SOLID) | (dom.labels == BOUNDARY)
    labels = dom.labels.copy()
    labels[material & near_void] = BOUNDARY
    labels[material & ~near_void] = SOLID
    dom.labels = labels
    return dom


def dilate(dom: VoxelDomain, label: int, iterations: int) -> VoxelDomain:
    """Grow the set of `label` elements into 26-adjacent solid elements."""
    if iterations < 0:
        raise DomainError("iterations must be >= 0")
    labels = dom.labels.copy()
    for _ in range(iterations):
        tagged = labels == label
        grow = ndimage.binary_dilation(tagged, structure=_FULL26) & (labels == SOLID)
        labels[grow] = label
    dom.labels = labels
    return dom


def _boundary_node_mask(dom: VoxelDomain) -> np.ndarray:
    mask = np.zeros(dom.n_nodes, dtype=bool)
    bnd = np.flatnonzero(np.isin(dom.labels.ravel(order="F"), (BOUNDARY, PASSIVE)))
    if len(bnd):
        mask[dom.element_node_ids(bnd).ravel()] = True
    return mask


def _select_boundary_nodes(dom: VoxelDomain, selector: RegionSelector) -> np.ndarray:
    candidates = np.flatnonzero(_boundary_node_mask(dom))
    if not len(candidates):
        return candidates
    inside = selector.contains(dom.node_positions(candidates))
    return candidates[inside]


def apply_fixation(dom: VoxelDomain, selector: RegionSelector) -> VoxelDomain:
    nodes = _select_boundary_nodes(dom, selector)
    if not len(nodes):
        raise DomainError(f"fixation selector {selector!r} selects no boundary nodes")
    dom.fixed[nodes] = True
    dom.fixation_selectors.append(selector)
    return dom


def apply_load(dom: VoxelDomain, selector: RegionSelector,
               total_force) -> VoxelDomain:
    total_force = np.asarray(total_force, dtype=np.float64).reshape(3)
    if not np.abs(total_force).any():
        warnings.warn("zero force vector: load ignored")
        return dom
    nodes = _select_boundary_nodes(dom, selector)
    if not len(nodes):
        raise DomainError(f"load selector {selector!r} selects no boundary nodes")
    if dom.fixed[nodes].all():
        raise DomainError(f"all nodes selected by {selector!r} are fixed")
    dom.loads[nodes] += total_force / len(nodes)
    dom.load_selectors.append((selector, total_force))
    return dom


def mark_passive(dom: VoxelDomain, mode: str = "all_boundary",
                 extra_dilation: int = 0) -> VoxelDomain:
    """Pin elements at full density: mode 'all_boundary' or 'loaded_and_fixed'."""
    labels = dom.labels.copy()
    if mode == "all_boundary":
        labels[labels == BOUNDARY] = PASSIVE
    elif mode == "loaded_and_fixed":
        special = dom.fixed | (np.abs(dom.loads).sum(axis=1) > 0)
        if special.any():
            active = dom.active_elements()
            enodes = dom.element_node_ids(active)
            hit = special[enodes].any(axis=1)
            flat = labels.ravel(order="F")
            sel = active[hit]
            flat[sel] = np.where(flat[sel] != VOID, PASSIVE, VOID)
            labels = flat.reshape(labels.shape, order="F")
    else:
        raise DomainError(f"unknown passive mode {mode!r}")
    dom.labels = labels
    return dilate(dom, PASSIVE, extra_dilation)


# ----------------------------------------------------------------- preset

def save_preset(dom: VoxelDomain, path) -> None:
    """Write `<stem>.preset.json` plus the label volume next to it."""
    path = Path(path)
    if not path.name.endswith(".preset.json"):
        raise DomainError("preset path must end with .preset.json")
    labels_path = path.with_name(path.name[:-len(".preset.json")] + ".labels.vox")
    volio.save_labels(labels_path, dom.labels, dom.spacing, dom.origin)
    blob = {
        "dims": list(dom.dims),
        "spacing": dom.spacing,
        "origin": dom.origin.tolist(),
        "labels": labels_path.name,
        "material": {"E0": dom.E0, "nu": dom.nu},
        "fixations": [s.to_dict() for s in dom.fixation_selectors],
        "loads": [{"selector": s.to_dict(), "force": f.tolist()}
                  for s, f in dom.load_selectors],
        "mesh": dom.mesh_path,
    }
    path.write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n")


def load_preset(path) -> VoxelDomain:
    path = Path(path)
    blob = json.loads(path.read_text())
    labels, spacing, origin = volio.load_labels(path.parent / blob["labels"])
    dom = VoxelDomain(labels, spacing, origin,
                      E0=blob["material"]["E0"], nu=blob["material"]["nu"],
                      mesh_path=blob.get("mesh"))
    for s in blob["fixations"]:
        apply_fixation(dom, RegionSelector.from_dict(s))
    for rec in blob["loads"]:
        apply_load(dom, RegionSelector.from_dict(rec["selector"]),
                   np.asarray(rec["force"]))
    return dom


def load_preset_mesh(dom: VoxelDomain) -> TriMesh | None:
    if dom.mesh_path and Path(dom.mesh_path).exists():
        return load_mesh(dom.mesh_path)
    return None
