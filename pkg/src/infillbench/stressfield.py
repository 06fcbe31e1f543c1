"""Per-element stress recovery, invariants and tensor-field utilities.

Tensors are stored as 6 components in Voigt order (xx, yy, zz, xy, yz, zx).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .domain import VOID, VoxelDomain
from .fem import GridOperator, elasticity_matrix, strain_matrix


class TraceExit(Exception):
    """Raised when a field query leaves the grid (streamline termination)."""


DEGENERACY_TOL = 1e-4


@dataclass
class StressTensorField:
    """Per-element symmetric stress tensors on the preset grid."""

    sigma: np.ndarray          # (n_elements, 6)
    dom: VoxelDomain

    def tensor3(self, idx) -> np.ndarray:
        return voigt_to_matrix(self.sigma[idx])


def voigt_to_matrix(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    m = np.empty(v.shape[:-1] + (3, 3))
    m[..., 0, 0] = v[..., 0]
    m[..., 1, 1] = v[..., 1]
    m[..., 2, 2] = v[..., 2]
    m[..., 0, 1] = m[..., 1, 0] = v[..., 3]
    m[..., 1, 2] = m[..., 2, 1] = v[..., 4]
    m[..., 2, 0] = m[..., 0, 2] = v[..., 5]
    return m[0] if single else m


def element_stress(u: np.ndarray, dom: VoxelDomain, moduli: np.ndarray,
                   op: GridOperator | None = None) -> StressTensorField:
    """sigma = E_e * D1 B u_e at element centroids; zero in void elements."""
    op = op or GridOperator(dom, moduli)
    D1 = elasticity_matrix(1.0, dom.nu)
    B = strain_matrix(np.zeros(3), dom.spacing)
    DB = D1 @ B                                  # (6, 24)
    uc = np.where(op.free, np.asarray(u, dtype=np.float64).ravel(), 0.0)
    ue = uc[op.edof]                             # (nact, 24)
    s = (ue @ DB.T) * op.scale[:, None]
    sigma = np.zeros((dom.n_elements, 6))
    sigma[op.active] = s
    return StressTensorField(sigma, dom)


def von_mises(sigma: np.ndarray) -> np.ndarray:
    """Scalar von Mises stress of Voigt tensors (..., 6)."""
    s = np.asarray(sigma, dtype=np.float64)
    xx, yy, zz, xy, yz, zx = (s[..., i] for i in range(6))
    return np.sqrt(0.5 * ((xx - yy) ** 2 + (yy - zz) ** 2 + (zz - xx) ** 2)
                   + 3.0 * (xy ** 2 + yz ** 2 + zx ** 2))


@dataclass
class PrincipalDecomposition:
    values: np.ndarray         # (..., 3) eigenvalues, sorted per ordering
    dirs: np.ndarray           # (..., 3, 3) unit eigenvectors as columns-by-rank
    degenerate: np.ndarray     # (...,) bool

    def dominant(self):
        return self.values[..., 0], self.dirs[..., 0, :]


def principal(sigma: np.ndarray, ordering: str = "signed",
              degeneracy_tol: float = DEGENERACY_TOL) -> PrincipalDecomposition:
    """Eigen-decomposition of Voigt tensors, sorted descending by eigenvalue
    ('signed') or by |eigenvalue| ('absolute'). dirs[..., r, :] is the unit
    direction of rank r; signs are fixed so the first nonzero component of
    each eigenvector is positive."""
    m = voigt_to_matrix(np.atleast_2d(np.asarray(sigma, dtype=np.float64)))
    vals, vecs = np.linalg.eigh(m)               # ascending
    if ordering == "signed":
        order = np.argsort(-vals, axis=-1)
    elif ordering == "absolute":
        order = np.argsort(-np.abs(vals), axis=-1, kind="stable")
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    vals_s = np.take_along_axis(vals, order, axis=-1)
    vecs_s = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    dirs = np.swapaxes(vecs_s, -1, -2)           # (..., rank, xyz)
    # deterministic sign: first component of magnitude > tol positive
    for comp in range(3):
        col = dirs[..., comp]
        flip = (np.abs(col) > 1e-12) & (col < 0) \
            & (np.abs(dirs[..., :comp]) <= 1e-12).all(axis=-1)
        dirs[flip] *= -1
    gap = np.diff(np.sort(vals, axis=-1), axis=-1).min(axis=-1)
    scale = np.abs(vals).max(axis=-1)
    degenerate = gap < degeneracy_tol * np.maximum(scale, 1e-300)
    squeeze = np.asarray(sigma).ndim == 1
    if squeeze:
        return PrincipalDecomposition(vals_s[0], dirs[0], degenerate[0])
    return PrincipalDecomposition(vals_s, dirs, degenerate)


class TensorInterpolator:
    """Trilinear interpolation of element-center tensors with void-aware
    weight renormalization."""

    def __init__(self, field: StressTensorField):
        self.dom = field.dom
        nx, ny, nz = self.dom.dims
        self.values = field.sigma.reshape((nx, ny, nz, 6), order="F")
        self.valid = (self.dom.labels != VOID).astype(np.float64)

    def __call__(self, p: np.ndarray) -> np.ndarray:
        dom = self.dom
        nx, ny, nz = dom.dims
        q = (np.asarray(p, dtype=np.float64) - dom.origin) / dom.spacing - 0.5
        if (q < -0.5 - 1e-9).any() or \
           (q > np.asarray([nx, ny, nz]) - 0.5 + 1e-9).any():
            raise TraceExit(f"point {p} outside grid")
        base = np.floor(q).astype(int)
        frac = q - base
        total = 0.0
        acc = np.zeros(6)
        for dx in range(2):
            for dy in range(2):
                for dz in range(2):
                    i = base + (dx, dy, dz)
                    if (i < 0).any() or i[0] >= nx or i[1] >= ny or i[2] >= nz:
                        continue
                    w = ((frac[0] if dx else 1 - frac[0])
                         * (frac[1] if dy else 1 - frac[1])
                         * (frac[2] if dz else 1 - frac[2]))
                    w *= self.valid[i[0], i[1], i[2]]
                    acc += w * self.values[i[0], i[1], i[2]]
                    total += w
        if total <= 0:
            raise TraceExit(f"point {p} has no material neighbors")
        return acc / total


def interpolate_tensor(field: StressTensorField, p) -> np.ndarray:
    return TensorInterpolator(field)(p)


def icdf_normalize(values: np.ndarray) -> np.ndarray:
    """Empirical-CDF rank normalization to [0, 1]; ties share the mean rank,
    an all-equal field maps to 0.5."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0 or not np.isfinite(v).any():
        raise ValueError("need at least one finite value")
    if v.size == 1 or v.max() == v.min():
        return np.full_like(v, 0.5).reshape(np.shape(values))
    ranks = rankdata(v, method="average") - 1.0
    return (ranks / (v.size - 1)).reshape(np.shape(values))
