"""Matrix-free hexahedral linear elasticity with a geometric-multigrid
preconditioned conjugate gradient solver.

Element DOF layout: 8 trilinear corner nodes in x-fastest tensor order
(see domain.CORNER_OFFSETS), 3 displacement components per node, so a
24-vector per element. Dirichlet conditions use identity-row substitution
so the structured grid layout is preserved at every level.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import CORNER_OFFSETS, VOID, VoxelDomain

GAUSS_1D = {
    1: (np.array([0.0]), np.array([2.0])),
    2: (np.array([-1, 1]) / np.sqrt(3.0), np.array([1.0, 1.0])),
}


class SolverError(RuntimeError):
    pass


def elasticity_matrix(E: float, nu: float) -> np.ndarray:
    """Isotropic 6x6 stiffness in Voigt order (xx, yy, zz, xy, yz, zx),
    engineering shear strains."""
    if not 0 <= nu < 0.5:
        raise ValueError("Poisson ratio must lie in [0, 0.5); "
                         "the incompressible limit is rejected")
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[np.arange(3), np.arange(3)] += 2 * mu
    D[3:, 3:] = np.eye(3) * mu
    return D


def shape_gradients(xi: np.ndarray, h: float) -> np.ndarray:
    """(3, 8) physical-space gradients of the trilinear basis at natural
    point `xi` in [-1, 1]^3 for cube edge length h."""
    signs = 2.0 * CORNER_OFFSETS - 1.0          # (8, 3)
    grads = np.empty((3, 8))
    for i in range(8):
        s = signs[i]
        terms = (1.0 + xi * s) / 2.0
        for ax in range(3):
            others = np.prod(np.delete(terms, ax))
            grads[ax, i] = (s[ax] / 2.0) * others * (2.0 / h)
    return grads


def strain_matrix(xi: np.ndarray, h: float) -> np.ndarray:
    """6x24 strain-displacement matrix B at natural point `xi`."""
    g = shape_gradients(xi, h)
    B = np.zeros((6, 24))
    for i in range(8):
        c = 3 * i
        B[0, c] = g[0, i]
        B[1, c + 1] = g[1, i]
        B[2, c + 2] = g[2, i]
        B[3, c] = g[1, i]
        B[3, c + 1] = g[0, i]
        B[4, c + 1] = g[2, i]
        B[4, c + 2] = g[1, i]
        B[5, c] = g[2, i]
        B[5, c + 2] = g[0, i]
    return B


def element_stiffness_matrix(E: float, nu: float, h: float,
                             n_gauss: int = 2) -> np.ndarray:
    """24x24 stiffness of a cube element via tensor Gauss quadrature."""
    if n_gauss in GAUSS_1D:
        pts, wts = GAUSS_1D[n_gauss]
    else:
        pts, wts = np.polynomial.legendre.leggauss(n_gauss)
    D = elasticity_matrix(E, nu)
    detJ = (h / 2.0) ** 3
    K = np.zeros((24, 24))
    for a, xa in enumerate(pts):
        for b, xb in enumerate(pts):
            for c, xc in enumerate(pts):
                B = strain_matrix(np.array([xa, xb, xc]), h)
                K += wts[a] * wts[b] * wts[c] * detJ * (B.T @ D @ B)
    return 0.5 * (K + K.T)


@dataclass
class ElementStiffness:
    """Generic element matrix per unit Young's modulus."""

    K_e0: np.ndarray
    E0: float
    nu: float
    h: float

    @classmethod
    def build(cls, E0: float, nu: float, h: float) -> "ElementStiffness":
        return cls(element_stiffness_matrix(1.0, nu, h), E0, nu, h)

    def rigid_body_modes(self) -> np.ndarray:
        """(24, 6) translations and infinitesimal rotations."""
        pos = CORNER_OFFSETS * self.h
        modes = np.zeros((24, 6))
        for i in range(8):
            modes[3 * i:3 * i + 3, :3] = np.eye(3)
            x, y, z = pos[i]
            modes[3 * i:3 * i + 3, 3] = (-y, x, 0)
            modes[3 * i:3 * i + 3, 4] = (0, -z, y)
            modes[3 * i:3 * i + 3, 5] = (z, 0, -x)
        return modes


def simp_modulus(rho, p: float = 3.0, Emin: float = 1e-9, E0: float = 1.0):
    """SIMP interpolation E = Emin + rho^p (E0 - Emin)."""
    return Emin + np.asarray(rho) ** p * (E0 - Emin)


@dataclass
class SolverConfig:
    rel_tol: float = 1e-3
    max_cg_iters: int = 2000
    levels: int | None = None          # None: coarsen until the direct level
    smoother_sweeps: int = 2           # pre and post sweeps each
    jacobi_damping: float = 0.6
    coarse_dof_cap: int = 3_000    # keep the direct level well under ~30k DOFs

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must be in (0, 1)")
        if self.levels is not None and self.levels < 1:
            raise ValueError("levels must be >= 1")


def element_dof_ids(enodes: np.ndarray) -> np.ndarray:
    return (3 * enodes[:, :, None] + np.arange(3)[None, None, :]).reshape(len(enodes), 24)


class GridOperator:
    """Fine-level matrix-free application of the global stiffness matrix."""

    def __init__(self, dom: VoxelDomain, moduli: np.ndarray,
                 Ke0: ElementStiffness | None = None):
        """`moduli` is the per-element Young's modulus over the full grid
        (x-fastest flat order); void elements are skipped."""
        self.dom = dom
        self.Ke = (Ke0 or ElementStiffness.build(dom.E0, dom.nu, dom.spacing))
        self.active = dom.active_elements()
        self.scale = np.asarray(moduli, dtype=np.float64).ravel()[self.active]
        self.edof = element_dof_ids(dom.element_node_ids(self.active))
        self.ndof = 3 * dom.n_nodes
        touched = np.zeros(dom.n_nodes, dtype=bool)
        touched[dom.element_node_ids(self.active).ravel()] = True
        constrained_nodes = dom.fixed | ~touched
        self.free = ~np.repeat(constrained_nodes, 3)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """K @ u with identity rows/columns at constrained DOFs."""
        u = np.asarray(u, dtype=np.float64).ravel()
        if u.size != self.ndof:
            raise SolverError(f"dimension mismatch: {u.size} != {self.ndof}")
        uc = np.where(self.free, u, 0.0)
        ue = uc[self.edof]
        fe = (ue @ self.Ke.K_e0) * self.scale[:, None]
        f = np.bincount(self.edof.ravel(), weights=fe.ravel(), minlength=self.ndof)
        f[~self.free] = u[~self.free]
        return f

    def diagonal(self) -> np.ndarray:
        d_e = np.diag(self.Ke.K_e0)
        vals = self.scale[:, None] * d_e[None, :]
        d = np.bincount(self.edof.ravel(), weights=vals.ravel(), minlength=self.ndof)
        d[~self.free] = 1.0
        return d

    def element_energies(self, u: np.ndarray) -> np.ndarray:
        """u_e^T K_e u_e per active element (same order as self.active)."""
        uc = np.where(self.free, np.asarray(u, dtype=np.float64).ravel(), 0.0)
        ue = uc[self.edof]
        return np.einsum("ei,ij,ej->e", ue, self.Ke.K_e0, ue) * self.scale

    def assemble(self) -> sp.csr_matrix:
        """Explicit sparse matrix (testing and coarse solves)."""
        n = len(self.active)
        rows = np.repeat(self.edof, 24, axis=1).ravel()
        cols = np.tile(self.edof, (1, 24)).ravel()
        vals = (self.scale[:, None, None] * self.Ke.K_e0[None, :, :]).ravel()
        K = sp.coo_matrix((vals, (rows, cols)), shape=(self.ndof, self.ndof)).tocsr()
        return _constrain_sparse(K, self.free)


def _constrain_sparse(K: sp.csr_matrix, free: np.ndarray) -> sp.csr_matrix:
    mask = sp.diags(free.astype(float))
    K = mask @ K @ mask
    K = K + sp.diags((~free).astype(float))
    return K.tocsr()


# -------------------------------------------------------------- multigrid

def _transfer_weights() -> np.ndarray:
    """(8, 24, 24) local prolongations from a coarse element's corners to the
    corners of its 8 child elements, trilinear."""
    P = np.zeros((8, 24, 24))
    for pos in range(8):
        bits = np.array([(pos >> k) & 1 for k in range(3)])
        W = np.empty((8, 8))
        for j in range(8):                       # fine corner
            t = (bits + CORNER_OFFSETS[j]) / 2.0  # coarse natural coords [0,1]
            for i in range(8):                   # coarse corner
                o = CORNER_OFFSETS[i]
                W[j, i] = np.prod(np.where(o == 1, t, 1 - t))
        P[pos] = np.kron(W, np.eye(3))
    return P


_P_LOCAL = _transfer_weights()


def _node_prolongation(fine_node_dims, coarse_node_dims) -> sp.csr_matrix:
    """Sparse trilinear prolongation from coarse to fine nodes (scalar)."""
    nfx, nfy, nfz = fine_node_dims
    ncx, ncy, ncz = coarse_node_dims
    nf = nfx * nfy * nfz

    def axis_entries(n_fine, n_coarse):
        i = np.arange(n_fine)
        lo = np.minimum(i // 2, n_coarse - 1)
        hi = np.minimum((i + 1) // 2, n_coarse - 1)
        w_hi = np.where(i % 2 == 1, 0.5, 0.0)
        w_lo = 1.0 - w_hi
        return lo, hi, w_lo, w_hi

    ax = [axis_entries(nfx, ncx), axis_entries(nfy, ncy), axis_entries(nfz, ncz)]
    ix, iy, iz = np.meshgrid(np.arange(nfx), np.arange(nfy), np.arange(nfz),
                             indexing="ij")
    fine_id = (ix + nfx * (iy + nfy * iz)).ravel(order="F")
    rows, cols, vals = [], [], []
    for bx in range(2):
        for by in range(2):
            for bz in range(2):
                cxi = (ax[0][bx])[ix]
                cyi = (ax[1][by])[iy]
                czi = (ax[2][bz])[iz]
                w = (ax[0][2 + bx])[ix] * (ax[1][2 + by])[iy] * (ax[2][2 + bz])[iz]
                keep = w.ravel(order="F") > 0
                rows.append(fine_id[keep])
                cols.append((cxi + ncx * (cyi + ncy * czi)).ravel(order="F")[keep])
                vals.append(w.ravel(order="F")[keep])
    P = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nf, ncx * ncy * ncz)).tocsr()
    P.sum_duplicates()
    return P


@dataclass
class _Level:
    dims: tuple            # element dims
    active: np.ndarray     # flat active element ids
    edof: np.ndarray       # (nact, 24)
    Ke: np.ndarray | None  # (nact, 24, 24) for coarse levels; None at level 0
    free: np.ndarray       # (ndof,) bool
    diag: np.ndarray = None
    P: sp.csr_matrix = None        # prolongation from next coarser level
    coarse_solve: object = None    # factorized coarsest matrix


class MultigridHierarchy:
    """Galerkin-coarsened element hierarchy for the grid operator."""

    def __init__(self, op: GridOperator, config: SolverConfig):
        self.op = op
        self.config = config
        self.levels: list[_Level] = []
        self._build()

    # -------------------------------------------------------------- build
    def _build(self):
        dom = self.op.dom
        dims = dom.dims
        lvl0 = _Level(dims=dims, active=self.op.active, edof=self.op.edof,
                      Ke=None, free=self.op.free, diag=self.op.diagonal())
        self.levels = [lvl0]
        fixed_nodes = dom.fixed.copy()
        node_dims = dom.node_dims
        active = self.op.active
        Ke_per_elem = None            # None means scale * K_e0
        scale = self.op.scale
        requested = self.config.levels
        while True:
            if requested is not None and len(self.levels) >= requested:
                break
            ndof_here = 3 * int(np.prod(node_dims))
            if ndof_here <= self.config.coarse_dof_cap and requested is None:
                break
            if min(self.levels[-1].dims) < 2:
                if requested is not None:
                    warnings.warn("multigrid depth clamped: dimension < 2")
                break
            fine_dims = self.levels[-1].dims
            coarse_dims = tuple(-(-d // 2) for d in fine_dims)
            nxf, nyf, nzf = fine_dims
            nxc, nyc, nzc = coarse_dims
            ex = active % nxf
            ey = (active // nxf) % nyf
            ez = active // (nxf * nyf)
            parent = (ex // 2) + nxc * ((ey // 2) + nyc * (ez // 2))
            pos = (ex & 1) + 2 * (ey & 1) + 4 * (ez & 1)
            coarse_active = np.unique(parent)
            cmap = -np.ones(nxc * nyc * nzc, dtype=np.int64)
            cmap[coarse_active] = np.arange(len(coarse_active))
            Kc = np.zeros((len(coarse_active), 24, 24))
            for p in range(8):
                sel = pos == p
                if not sel.any():
                    continue
                Pl = _P_LOCAL[p]
                # a coarse element has at most one child per octant position,
                # so the target indices are unique within each pass
                if Ke_per_elem is None:
                    M = Pl.T @ self.op.Ke.K_e0 @ Pl
                    Kc[cmap[parent[sel]]] += scale[sel][:, None, None] * M[None]
                else:
                    contrib = np.einsum("ji,ejk,kl->eil", Pl, Ke_per_elem[sel], Pl,
                                        optimize=True)
                    Kc[cmap[parent[sel]]] += contrib
            coarse_node_dims = (nxc + 1, nyc + 1, nzc + 1)
            P_nodes = _node_prolongation(node_dims, coarse_node_dims)
            P = sp.kron(P_nodes, sp.eye(3), format="csr")
            # a coarse node is Dirichlet if any fixed fine node lies in its
            # prolongation support (plain injection misses fixed planes at
            # odd indices, leaving the coarse system floating)
            cflat = np.asarray(
                P_nodes.T @ fixed_nodes.astype(np.float64)).ravel() > 1e-12
            cenodes = self._elem_nodes(coarse_active, coarse_dims)
            cedof = element_dof_ids(cenodes)
            touched = np.zeros(int(np.prod(coarse_node_dims)), dtype=bool)
            touched[cenodes.ravel()] = True
            cfree = ~np.repeat(cflat | ~touched, 3)
            diag = np.bincount(cedof.ravel(),
                               weights=np.einsum("eii->ei", Kc).ravel(),
                               minlength=3 * int(np.prod(coarse_node_dims)))
            diag[~cfree] = 1.0
            diag[cfree & (diag == 0)] = 1.0
            self.levels[-1].P = P
            self.levels.append(_Level(dims=coarse_dims, active=coarse_active,
                                      edof=cedof, Ke=Kc, free=cfree, diag=diag))
            active = coarse_active
            Ke_per_elem = Kc
            fixed_nodes = cflat
            node_dims = coarse_node_dims
        self._factorize_coarsest()

    @staticmethod
    def _elem_nodes(elem_ids, dims):
        nx, ny, nz = dims
        nnx, nny = nx + 1, ny + 1
        ix = elem_ids % nx
        iy = (elem_ids // nx) % ny
        iz = elem_ids // (nx * ny)
        cx = ix[:, None] + CORNER_OFFSETS[None, :, 0]
        cy = iy[:, None] + CORNER_OFFSETS[None, :, 1]
        cz = iz[:, None] + CORNER_OFFSETS[None, :, 2]
        return cx + nnx * (cy + nny * cz)

    @staticmethod
    def _inject_fixed(fixed_nodes, fine_node_dims, coarse_node_dims):
        nfx, nfy, nfz = fine_node_dims
        ncx, ncy, ncz = coarse_node_dims
        cx, cy, cz = np.meshgrid(np.arange(ncx), np.arange(ncy), np.arange(ncz),
                                 indexing="ij")
        fx = np.minimum(2 * cx, nfx - 1)
        fy = np.minimum(2 * cy, nfy - 1)
        fz = np.minimum(2 * cz, nfz - 1)
        fid = (fx + nfx * (fy + nfy * fz)).ravel(order="F")
        cid = (cx + ncx * (cy + ncy * cz)).ravel(order="F")
        out = np.zeros(ncx * ncy * ncz, dtype=bool)
        out[cid] = fixed_nodes[fid]
        return out

    def _factorize_coarsest(self):
        lvl = self.levels[-1]
        if lvl.Ke is None:
            K = self.op.assemble()
        else:
            ndof = len(lvl.free)
            rows = np.repeat(lvl.edof, 24, axis=1).ravel()
            cols = np.tile(lvl.edof, (1, 24)).ravel()
            K = sp.coo_matrix((lvl.Ke.ravel(), (rows, cols)),
                              shape=(ndof, ndof)).tocsr()
            K = _constrain_sparse(K, lvl.free)
        lvl.coarse_solve = spla.factorized(K.tocsc())

    # -------------------------------------------------------------- apply
    def apply_level(self, li: int, u: np.ndarray) -> np.ndarray:
        lvl = self.levels[li]
        if li == 0:
            return self.op.apply(u)
        uc = np.where(lvl.free, u, 0.0)
        ue = uc[lvl.edof]
        fe = np.einsum("eij,ej->ei", lvl.Ke, ue)
        f = np.bincount(lvl.edof.ravel(), weights=fe.ravel(), minlength=u.size)
        f[~lvl.free] = u[~lvl.free]
        return f

    def _smooth(self, li: int, u, b, sweeps):
        lvl = self.levels[li]
        omega = self.config.jacobi_damping
        for _ in range(sweeps):
            r = b - self.apply_level(li, u)
            u = u + omega * r / lvl.diag
        return u

    def v_cycle(self, li: int, b: np.ndarray, u=None) -> np.ndarray:
        lvl = self.levels[li]
        if li == len(self.levels) - 1:
            bc = np.where(lvl.free, b, b)   # identity rows carry the value
            return lvl.coarse_solve(bc)
        if u is None:
            u = np.zeros_like(b)
        u = self._smooth(li, u, b, self.config.smoother_sweeps)
        r = b - self.apply_level(li, u)
        r = np.where(lvl.free, r, 0.0)
        rc = lvl.P.T @ r
        nxt = self.levels[li + 1]
        rc = np.where(nxt.free, rc, 0.0)
        ec = self.v_cycle(li + 1, rc)
        ec = np.where(nxt.free, ec, 0.0)
        e = lvl.P @ ec
        e = np.where(lvl.free, e, 0.0)
        u = u + e
        u = self._smooth(li, u, b, self.config.smoother_sweeps)
        return u

    def precondition(self, r: np.ndarray) -> np.ndarray:
        return self.v_cycle(0, r)


@dataclass
class SolveResult:
    u: np.ndarray
    iterations: int
    residuals: list
    converged: bool


def solve(dom: VoxelDomain, moduli: np.ndarray, f: np.ndarray,
          config: SolverConfig | None = None,
          hierarchy: MultigridHierarchy | None = None,
          u0: np.ndarray | None = None) -> SolveResult:
    """Solve K u = f with MGCG; f is a (ndof,) or (nnodes, 3) force vector."""
    config = config or SolverConfig()
    f = np.asarray(f, dtype=np.float64).ravel()
    if not np.isfinite(f).all():
        raise SolverError("force vector contains non-finite entries")
    if not dom.fixed.any():
        raise SolverError("no fixed nodes: structure is floating")
    if hierarchy is None:
        op = GridOperator(dom, moduli)
        hierarchy = MultigridHierarchy(op, config)
    else:
        op = hierarchy.op
    fnorm = np.linalg.norm(f)
    if fnorm == 0:
        return SolveResult(np.zeros(op.ndof), 0, [], True)
    fc = np.where(op.free, f, 0.0)
    u = np.zeros(op.ndof) if u0 is None else np.where(op.free, u0, 0.0)
    r = fc - op.apply(u)
    r = np.where(op.free, r, 0.0)
    residuals = [np.linalg.norm(r) / fnorm]
    if residuals[-1] <= config.rel_tol:
        return SolveResult(u, 0, residuals, True)
    z = hierarchy.precondition(r)
    p = z.copy()
    rz = float(r @ z)
    converged = False
    it = 0
    for it in range(1, config.max_cg_iters + 1):
        Ap = op.apply(p)
        Ap = np.where(op.free, Ap, 0.0)
        alpha = rz / float(p @ Ap)
        u = u + alpha * p
        r = r - alpha * Ap
        rel = np.linalg.norm(r) / fnorm
        residuals.append(rel)
        if rel <= config.rel_tol:
            converged = True
            break
        z = hierarchy.precondition(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    return SolveResult(u, it, residuals, converged)


def compliance(u: np.ndarray, f: np.ndarray) -> float:
    """c = f . u (equals U^T K U at the solution)."""
    return float(np.asarray(f).ravel() @ np.asarray(u).ravel())
