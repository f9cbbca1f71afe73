"""Residual and Jacobian assembly for the irreducible elasto-plastic
formulation on the active mesh.

The volume term integrates grad(v) : sigma(u, history) with tensor Gauss
rules on interior cells and the simplicial sub-mesh on cut cells. Unfitted
Dirichlet parts carry symmetric Nitsche terms with penalty
beta = beta0 * 2G / h_T; tractions enter on unfitted boundary segments and
(clipped) box faces. Everything is assembled over the full nodal space and
projected to free DOFs through the constraint expansion u_full = E u_free + d.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cutgeom import CUT, INTERIOR, clip_segment_to_domain
from .pipeline import Discretization
from .plasticity import MaterialParams, elastic_tangent, stress_update_batch
from .quadrature import gauss_1d
from .quadtree import cell_geometry
from .spaces import bilinear_basis, bilinear_grad

log = logging.getLogger(__name__)

__all__ = ["BoundaryCondition", "Problem", "SparseSystem", "AssemblyContext",
           "assemble_residual", "assemble_jacobian", "apply_constraints_expand",
           "estimate_condition_number", "dump_matrix"]

_FACES = ("left", "right", "bottom", "top")


def _zero_value(points, load_factor):
    return np.zeros((np.asarray(points).reshape(-1, 2).shape[0], 2))


@dataclass
class BoundaryCondition:
    """One boundary condition on either a box face of the artificial domain or
    the level-set (unfitted) boundary.

    ``value(points, load_factor) -> (n, 2)`` prescribes displacement or
    traction; for unfitted Neumann a scalar ``pressure`` may be given instead,
    meaning t = -load_factor * pressure * n with n the outward normal.
    ``selector(points) -> bool mask`` restricts unfitted conditions to part of
    the boundary.
    """

    kind: str                               # dirichlet_strong | dirichlet_nitsche | neumann
    where: str                              # box_face | unfitted
    face: str | None = None
    components: tuple = ("x", "y")
    value: callable = _zero_value
    pressure: float | None = None
    selector: callable = None

    def __post_init__(self):
        if self.kind not in ("dirichlet_strong", "dirichlet_nitsche", "neumann"):
            raise ValueError(f"unknown boundary-condition kind {self.kind!r}")
        if self.where not in ("box_face", "unfitted"):
            raise ValueError(f"unknown boundary-condition location {self.where!r}")
        if self.where == "box_face" and self.face not in _FACES:
            raise ValueError(f"box-face condition needs face in {_FACES}")
        if self.kind == "dirichlet_strong" and self.where != "box_face":
            raise ValueError("strong Dirichlet is only supported on mesh-conforming box faces")
        if self.kind == "dirichlet_nitsche" and self.where != "unfitted":
            raise ValueError("Nitsche Dirichlet applies to the unfitted boundary")


@dataclass
class Problem:
    material: MaterialParams
    bcs: list
    nitsche_beta0: float = 25.0
    body_force: callable = None


@dataclass
class SparseSystem:
    """Tangent system over free DOFs: matrix * delta_u = rhs."""

    matrix: sp.csr_matrix
    rhs: np.ndarray


# ------------------------------------------------------------------ element matrices

def _vector_dofs(nodes: np.ndarray) -> np.ndarray:
    """(..., 4) node ids -> (..., 8) interleaved vector DOF ids."""
    out = np.empty(nodes.shape + (2,), dtype=int)
    out[..., 0] = 2 * nodes
    out[..., 1] = 2 * nodes + 1
    return out.reshape(nodes.shape[:-1] + (8,))


def _b_matrices(local_pts: np.ndarray, h) -> np.ndarray:
    """(n, 4, 8) plane-strain B matrices (Voigt xx, yy, zz, xy with
    engineering shear) at local coordinates; h scales the gradients."""
    g = bilinear_grad((0.0, 1.0), (0.0, 1.0), local_pts)          # (n, 4, 2)
    h = np.asarray(h, float)
    g = g / (h.reshape(-1, 1, 1) if h.ndim else h)
    n = g.shape[0]
    b = np.zeros((n, 4, 8))
    for a in range(4):
        b[:, 0, 2 * a] = g[:, a, 0]
        b[:, 1, 2 * a + 1] = g[:, a, 1]
        b[:, 3, 2 * a] = g[:, a, 1]
        b[:, 3, 2 * a + 1] = g[:, a, 0]
    return b


def _shape_matrices(local_pts: np.ndarray) -> np.ndarray:
    """(n, 2, 8) displacement interpolation matrices V with u(x) = V u_cell."""
    nvals = bilinear_basis((0.0, 1.0), (0.0, 1.0), local_pts)     # (n, 4)
    n = nvals.shape[0]
    v = np.zeros((n, 2, 8))
    for a in range(4):
        v[:, 0, 2 * a] = nvals[:, a]
        v[:, 1, 2 * a + 1] = nvals[:, a]
    return v


def _traction_matrices(normals: np.ndarray) -> np.ndarray:
    """(n, 2, 4) maps P with t = P sigma_voigt for unit normals."""
    n = normals.shape[0]
    p = np.zeros((n, 2, 4))
    p[:, 0, 0] = normals[:, 0]
    p[:, 0, 3] = normals[:, 1]
    p[:, 1, 1] = normals[:, 1]
    p[:, 1, 3] = normals[:, 0]
    return p


# ------------------------------------------------------------------ assembly context

@dataclass
class _InteriorGroup:
    cells: list
    dof_rows: np.ndarray        # (m, 8)
    hist_dofs: np.ndarray       # (m, 4)
    b: np.ndarray               # (4, 4, 8) per-qp B matrices
    v: np.ndarray               # (4, 2, 8) per-qp shape matrices
    weights: np.ndarray         # (4,)
    points: np.ndarray          # (m, 4, 2) physical qp coordinates


@dataclass
class _CutBlock:
    dof_rows: np.ndarray        # (nq, 8)
    hist_dofs: np.ndarray       # (nq, 4)
    hist_basis: np.ndarray      # (nq, 4)
    b: np.ndarray               # (nq, 4, 8)
    v: np.ndarray               # (nq, 2, 8)
    weights: np.ndarray         # (nq,)
    points: np.ndarray          # (nq, 2)


@dataclass
class _FaceBlock:
    """Quadrature for one boundary condition on boundary segments."""

    bc: BoundaryCondition
    dof_rows: np.ndarray        # (nq, 8)
    hist_dofs: np.ndarray       # (nq, 4)
    hist_basis: np.ndarray      # (nq, 4)
    b: np.ndarray               # (nq, 4, 8)
    v: np.ndarray               # (nq, 2, 8)
    p: np.ndarray               # (nq, 2, 4)
    weights: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    beta: np.ndarray            # (nq,) Nitsche penalty (zero for Neumann)


class AssemblyContext:
    """Static data for repeated residual/Jacobian evaluations on one mesh."""

    def __init__(self, disc: Discretization, problem: Problem):
        self.disc = disc
        self.problem = problem
        space = disc.space
        self.n_full = 2 * space.n_nodes
        self._build_dof_partition()
        self._build_volume_blocks()
        self._build_boundary_blocks()

    # -------------------------------------------------- DOF partition and expansion
    def _build_dof_partition(self):
        space = self.disc.space
        prescribed: dict[tuple, object] = {}
        n_side = 1 << space.mesh.max_level
        for bc in self.problem.bcs:
            if bc.kind != "dirichlet_strong":
                continue
            axis, target = {"left": (0, 0), "right": (0, n_side),
                            "bottom": (1, 0), "top": (1, n_side)}[bc.face]
            on_face = np.flatnonzero(space.node_coords_int[:, axis] == target)
            comps = [0 if c == "x" else 1 for c in bc.components]
            for nid in on_face:
                if space.node_kind[nid] != "free":
                    continue
                for c in comps:
                    prescribed[(int(nid), c)] = bc
        self.prescribed = prescribed

        free_pairs = []
        for nid in space.free_nodes:
            for c in (0, 1):
                if (int(nid), c) not in prescribed:
                    free_pairs.append((int(nid), c))
        self.free_pairs = free_pairs
        self.n_free = len(free_pairs)
        slot = {}
        for k, pair in enumerate(free_pairs):
            slot[pair] = k
        rows, cols, vals = [], [], []
        for k, (nid, c) in enumerate(free_pairs):
            rows.append(2 * nid + c)
            cols.append(k)
            vals.append(1.0)
        # constrained nodes expand through their (free or prescribed) masters
        self._constrained_from_prescribed = []
        for nid, masters in space.constraints.items():
            for c in (0, 1):
                for m, coef in masters:
                    if (m, c) in slot:
                        rows.append(2 * nid + c)
                        cols.append(slot[(m, c)])
                        vals.append(coef)
                    else:
                        self._constrained_from_prescribed.append((2 * nid + c, (m, c), coef))
        self.expansion = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_full, self.n_free))
        self.expansion_t = self.expansion.T.tocsr()

    def prescribed_values(self, load_factor: float) -> np.ndarray:
        """Inhomogeneity d with u_full = E u_free + d."""
        space = self.disc.space
        d = np.zeros(self.n_full)
        gvals = {}
        for (nid, c), bc in self.prescribed.items():
            val = bc.value(space.node_coords[nid][None, :], load_factor)[0]
            gvals[(nid, c)] = val[c]
            d[2 * nid + c] = val[c]
        for row, pair, coef in self._constrained_from_prescribed:
            d[row] += coef * gvals.get(pair, 0.0)
        return d

    def expand(self, u_free: np.ndarray, load_factor: float) -> np.ndarray:
        return self.expansion @ u_free + self.prescribed_values(load_factor)

    # -------------------------------------------------- volume quadrature blocks
    def _build_volume_blocks(self):
        disc = self.disc
        space = disc.space
        hist = disc.history
        x1, w1 = gauss_1d(2)
        ref = np.array([(xi, yi) for yi in x1 for xi in x1])
        wref = np.array([wi * wj for wj in w1 for wi in w1])

        groups: dict[int, list] = {}
        for cell in space.cells:
            if disc.classes[cell] == INTERIOR:
                groups.setdefault(cell.level, []).append(cell)

        self.interior_groups = []
        for level in sorted(groups):
            cells = groups[level]
            h = space.mesh.side / (1 << level)
            nodes = np.stack([space.cell_nodes[c] for c in cells])
            pts = np.empty((len(cells), 4, 2))
            for k, c in enumerate(cells):
                (ax, ay), _ = cell_geometry(space.mesh, c)
                pts[k] = np.array([ax, ay]) + h * ref
            self.interior_groups.append(_InteriorGroup(
                cells=cells,
                dof_rows=_vector_dofs(nodes),
                hist_dofs=np.stack([hist.cell_dofs[c] for c in cells]),
                b=_b_matrices(ref, np.full(4, h)),
                v=_shape_matrices(ref),
                weights=wref * h * h,
                points=pts,
            ))

        rows, hdofs, hbas, bmats, vmats, wts, pts = [], [], [], [], [], [], []
        for cell in space.cells:
            if disc.classes[cell] != CUT:
                continue
            geo = disc.cutgeo[cell]
            q = geo.volume_quadrature
            if q.points.shape[0] == 0:
                continue
            (ax, ay), h = cell_geometry(space.mesh, cell)
            local = (q.points - np.array([ax, ay])) / h
            nq = q.points.shape[0]
            rows.append(np.tile(_vector_dofs(space.cell_nodes[cell][None, :]), (nq, 1)))
            hdofs.append(np.tile(hist.cell_dofs[cell], (nq, 1)))
            hbas.append(hist.basis_at(cell, q.points))
            bmats.append(_b_matrices(local, np.full(nq, h)))
            vmats.append(_shape_matrices(local))
            wts.append(q.weights)
            pts.append(q.points)
        if rows:
            self.cut_block = _CutBlock(
                dof_rows=np.vstack(rows), hist_dofs=np.vstack(hdofs),
                hist_basis=np.vstack(hbas), b=np.vstack(bmats), v=np.vstack(vmats),
                weights=np.concatenate(wts), points=np.vstack(pts))
        else:
            self.cut_block = None

    # -------------------------------------------------- boundary quadrature blocks
    def _build_boundary_blocks(self):
        disc = self.disc
        space = disc.space
        hist = disc.history
        g = self.problem.material.shear_modulus
        self.face_blocks: list[_FaceBlock] = []

        for bc in self.problem.bcs:
            if bc.kind == "dirichlet_strong":
                continue
            entries = []     # (cell, point, weight, normal)
            if bc.where == "unfitted":
                for cell in space.cells:
                    if disc.classes[cell] != CUT:
                        continue
                    geo = disc.cutgeo[cell]
                    if geo.boundary_quadrature is None:
                        continue
                    q = geo.boundary_quadrature
                    mask = np.ones(q.points.shape[0], bool) if bc.selector is None \
                        else np.asarray(bc.selector(q.points), bool)
                    for k in np.flatnonzero(mask):
                        entries.append((cell, q.points[k], q.weights[k], geo.boundary_normals[k]))
            else:
                entries.extend(self._box_face_entries(bc))
            if not entries:
                log.warning("boundary condition %s/%s selects no quadrature points",
                            bc.kind, bc.where)
                continue

            cells = [e[0] for e in entries]
            pts = np.array([e[1] for e in entries])
            wts = np.array([e[2] for e in entries])
            nrm = np.array([e[3] for e in entries])
            local = np.empty_like(pts)
            hcell = np.empty((len(entries), 4), dtype=int)
            rows = np.empty((len(entries), 8), dtype=int)
            hbas = np.empty((len(entries), 4))
            beta = np.zeros(len(entries))
            for k, cell in enumerate(cells):
                (ax, ay), h = cell_geometry(space.mesh, cell)
                local[k] = (pts[k] - np.array([ax, ay])) / h
                hcell[k] = hist.cell_dofs[cell]
                rows[k] = _vector_dofs(space.cell_nodes[cell][None, :])[0]
                hbas[k] = hist.basis_at(cell, pts[k][None, :])[0]
                if bc.kind == "dirichlet_nitsche":
                    beta[k] = self.problem.nitsche_beta0 * 2.0 * g / h
            self.face_blocks.append(_FaceBlock(
                bc=bc, dof_rows=rows, hist_dofs=hcell, hist_basis=hbas,
                b=_b_matrices(local, np.array([cell_geometry(space.mesh, c)[1] for c in cells])),
                v=_shape_matrices(local), p=_traction_matrices(nrm),
                weights=wts, points=pts, normals=nrm, beta=beta))

    def _box_face_entries(self, bc: BoundaryCondition):
        disc = self.disc
        space = disc.space
        n_side = 1 << space.mesh.max_level
        axis, target, normal = {
            "left": (0, 0, (-1.0, 0.0)), "right": (0, n_side, (1.0, 0.0)),
            "bottom": (1, 0, (0.0, -1.0)), "top": (1, n_side, (0.0, 1.0)),
        }[bc.face]
        x1, w1 = gauss_1d(3)
        entries = []
        for cell in space.cells:
            x0, y0, ext, _ = space.mesh.cell_bounds_int(cell)
            lo = (x0, y0)[axis]
            if target == 0:
                if lo != 0:
                    continue
            elif lo + ext != target:
                continue
            (ax, ay), h = cell_geometry(space.mesh, cell)
            if axis == 0:
                xf = ax if target == 0 else ax + h
                p0, p1 = np.array([xf, ay]), np.array([xf, ay + h])
            else:
                yf = ay if target == 0 else ay + h
                p0, p1 = np.array([ax, yf]), np.array([ax + h, yf])
            spans = [(0.0, 1.0)] if disc.classes[cell] == INTERIOR \
                else clip_segment_to_domain(disc.levelset, p0, p1)
            for a, b in spans:
                for xi, wi in zip(x1, w1):
                    t = a + (b - a) * xi
                    entries.append((cell, p0 + t * (p1 - p0), (b - a) * wi * h,
                                    np.array(normal)))
        return entries

    # -------------------------------------------------- history gathering
    def _interp_history(self, hist_values, hist_dofs, hist_basis):
        alpha_v, ep_v = hist_values
        alpha = np.einsum("qi,qi->q", hist_basis, alpha_v[hist_dofs])
        np.maximum(alpha, 0.0, out=alpha)
        ep = np.einsum("qi,qic->qc", hist_basis, ep_v[hist_dofs])
        return alpha, ep


def _stress_at(ctx: AssemblyContext, block, u_full, hist_values, want_tangent):
    """Strain, stress and (optionally) tangent at a block's quadrature points."""
    if isinstance(block, _InteriorGroup):
        u_cell = u_full[block.dof_rows]                          # (m, 8)
        eps = np.einsum("qck,mk->mqc", block.b, u_cell)          # (m, 4, 4)
        m = eps.shape[0]
        alpha_v, ep_v = hist_values
        alpha = alpha_v[block.hist_dofs].reshape(-1)
        np.maximum(alpha, 0.0, out=alpha)
        ep = ep_v[block.hist_dofs].reshape(-1, 4)
        sig, tang, *_ = stress_update_batch(eps.reshape(-1, 4), alpha, ep,
                                            ctx.problem.material)
        return eps, sig.reshape(m, 4, 4), (tang.reshape(m, 4, 4, 4) if want_tangent else None)
    u_cell = u_full[block.dof_rows]                              # (nq, 8)
    eps = np.einsum("qck,qk->qc", block.b, u_cell)
    alpha, ep = ctx._interp_history(hist_values, block.hist_dofs, block.hist_basis)
    sig, tang, *_ = stress_update_batch(eps, alpha, ep, ctx.problem.material)
    return eps, sig, (tang if want_tangent else None)


def _assemble(ctx: AssemblyContext, u_free, hist_values, load_factor, want_matrix):
    u_full = ctx.expand(u_free, load_factor)
    r_full = np.zeros(ctx.n_full)
    trip_r, trip_c, trip_v = [], [], []

    def add_matrix(rows, kmat):
        # rows: (m, 8); kmat: (m, 8, 8)
        m = rows.shape[0]
        rr = np.repeat(rows[:, :, None], 8, axis=2)
        cc = np.repeat(rows[:, None, :], 8, axis=1)
        trip_r.append(rr.ravel())
        trip_c.append(cc.ravel())
        trip_v.append(kmat.ravel())

    body = ctx.problem.body_force

    for grp in ctx.interior_groups:
        eps, sig, tang = _stress_at(ctx, grp, u_full, hist_values, want_matrix)
        r_cell = np.einsum("qck,mqc,q->mk", grp.b, sig, grp.weights)
        if body is not None:
            f = body(grp.points.reshape(-1, 2), load_factor).reshape(len(grp.cells), 4, 2)
            r_cell -= np.einsum("qck,mqc,q->mk", grp.v, f, grp.weights)
        np.add.at(r_full, grp.dof_rows, r_cell)
        if want_matrix:
            k_cell = np.einsum("qci,mqcd,qdj,q->mij", grp.b, tang, grp.b, grp.weights)
            add_matrix(grp.dof_rows, k_cell)

    if ctx.cut_block is not None:
        blk = ctx.cut_block
        eps, sig, tang = _stress_at(ctx, blk, u_full, hist_values, want_matrix)
        r_q = np.einsum("qck,qc,q->qk", blk.b, sig, blk.weights)
        if body is not None:
            f = body(blk.points, load_factor)
            r_q -= np.einsum("qck,qc,q->qk", blk.v, f, blk.weights)
        np.add.at(r_full, blk.dof_rows, r_q)
        if want_matrix:
            k_q = np.einsum("qci,qcd,qdj,q->qij", blk.b, tang, blk.b, blk.weights)
            add_matrix(blk.dof_rows, k_q)

    c_el = elastic_tangent(ctx.problem.material)
    for blk in ctx.face_blocks:
        bc = blk.bc
        if bc.kind == "neumann":
            if bc.pressure is not None:
                trac = -load_factor * bc.pressure * blk.normals
            else:
                trac = bc.value(blk.points, load_factor)
            r_q = -np.einsum("qck,qc,q->qk", blk.v, trac, blk.weights)
            np.add.at(r_full, blk.dof_rows, r_q)
            continue
        # symmetric Nitsche for weak Dirichlet: consistency with the true
        # (possibly plastic) traction, adjoint term with the elastic stress of
        # the test function, penalty beta = beta0 * 2G / h_T
        eps, sig, tang = _stress_at(ctx, blk, u_full, hist_values, want_matrix)
        u_at = np.einsum("qck,qk->qc", blk.v, u_full[blk.dof_rows])
        mismatch = u_at - bc.value(blk.points, load_factor)
        t_u = np.einsum("qcd,qd->qc", blk.p, sig)                     # sigma(u, mu) . n
        pceb = np.einsum("qcd,de,qek->qck", blk.p, c_el, blk.b)       # sigma_e(.) . n
        r_q = (-np.einsum("qck,qc,q->qk", blk.v, t_u, blk.weights)
               - np.einsum("qck,qc,q->qk", pceb, mismatch, blk.weights)
               + np.einsum("qck,qc,q->qk", blk.v, mismatch, blk.weights * blk.beta))
        np.add.at(r_full, blk.dof_rows, r_q)
        if want_matrix:
            pcepb = np.einsum("qcd,qde,qek->qck", blk.p, tang, blk.b)
            k_q = (-np.einsum("qci,qck,q->qik", blk.v, pcepb, blk.weights)
                   - np.einsum("qci,qcj,q->qij", pceb, blk.v, blk.weights)
                   + np.einsum("qci,qck,q->qik", blk.v, blk.v, blk.weights * blk.beta))
            add_matrix(blk.dof_rows, k_q)

    r_free = ctx.expansion_t @ r_full
    if not want_matrix:
        return r_free, None
    k_full = sp.coo_matrix((np.concatenate(trip_v),
                            (np.concatenate(trip_r), np.concatenate(trip_c))),
                           shape=(ctx.n_full, ctx.n_full)).tocsr()
    k_free = (ctx.expansion_t @ k_full @ ctx.expansion).tocsr()
    return r_free, k_free


def assemble_residual(ctx: AssemblyContext, u_free: np.ndarray, hist_values,
                      load_factor: float) -> np.ndarray:
    """Discrete residual over free DOFs at the given state."""
    r, _ = _assemble(ctx, u_free, hist_values, load_factor, want_matrix=False)
    return r


def assemble_jacobian(ctx: AssemblyContext, u_free: np.ndarray, hist_values,
                      load_factor: float) -> SparseSystem:
    """Tangent system D R delta_u = -R at the given state."""
    r, k = _assemble(ctx, u_free, hist_values, load_factor, want_matrix=True)
    return SparseSystem(matrix=k, rhs=-r)


def apply_constraints_expand(ctx: AssemblyContext, u_free: np.ndarray,
                             load_factor: float = 1.0) -> np.ndarray:
    """Full DOF vector (2 per node) with constrained and prescribed entries
    derived from the free vector."""
    return ctx.expand(u_free, load_factor)


def energy_product(ctx: AssemblyContext, u_free: np.ndarray, hist_values,
                   load_factor: float) -> float:
    """A(u, u) = integral of grad(u) : sigma(u, history) over the domain."""
    u_full = ctx.expand(u_free, load_factor)
    total = 0.0
    for grp in ctx.interior_groups:
        eps, sig, _ = _stress_at(ctx, grp, u_full, hist_values, False)
        total += float(np.einsum("mqc,mqc,q->", eps, sig, grp.weights))
    if ctx.cut_block is not None:
        blk = ctx.cut_block
        eps, sig, _ = _stress_at(ctx, blk, u_full, hist_values, False)
        total += float(np.einsum("qc,qc,q->", eps, sig, blk.weights))
    return total


def min_abs_phi_trial(ctx: AssemblyContext, u_free: np.ndarray, hist_values,
                      load_factor: float) -> float:
    """Smallest |phi_trial| over all volume quadrature points; used to keep
    finite-difference checks away from the yield-surface kink."""
    u_full = ctx.expand(u_free, load_factor)
    worst = np.inf
    blocks = list(ctx.interior_groups) + ([ctx.cut_block] if ctx.cut_block is not None else [])
    for block in blocks:
        if isinstance(block, _InteriorGroup):
            eps = np.einsum("qck,mk->mqc", block.b, u_full[block.dof_rows]).reshape(-1, 4)
            alpha_v, ep_v = hist_values
            alpha = np.maximum(alpha_v[block.hist_dofs].reshape(-1), 0.0)
            ep = ep_v[block.hist_dofs].reshape(-1, 4)
        else:
            eps = np.einsum("qck,qk->qc", block.b, u_full[block.dof_rows])
            alpha, ep = ctx._interp_history(hist_values, block.hist_dofs, block.hist_basis)
        *_, phi = stress_update_batch(eps, alpha, ep, ctx.problem.material)
        worst = min(worst, float(np.abs(phi).min()))
    return worst


def estimate_condition_number(matrix: sp.spmatrix, method: str = "dense") -> float:
    """Spectral condition estimate of a symmetric matrix.

    'dense' computes the full spectrum (small systems); 'power' runs power
    iteration for the largest eigenvalue and CG-based inverse iteration for
    the smallest.
    """
    if method == "dense":
        w = np.linalg.eigvalsh(matrix.toarray())
        w = np.abs(w)
        lo = max(w.min(), np.finfo(float).eps * w.max())
        return float(w.max() / lo)
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    from .solvers import cg_solve, LinearSolverConfig
    rng = np.random.default_rng(1234)
    n = matrix.shape[0]
    x = rng.standard_normal(n)
    for _ in range(200):
        x = matrix @ x
        x /= np.linalg.norm(x)
    lam_max = float(x @ (matrix @ x))
    y = rng.standard_normal(n)
    cfg = LinearSolverConfig(rel_tol=1e-10, max_iters_factor=50)
    for _ in range(20):
        y, _ = cg_solve(matrix, y, cfg)
        y /= np.linalg.norm(y)
    lam_min = float(y @ (matrix @ y))
    return float(lam_max / max(lam_min, np.finfo(float).eps * lam_max))


def dump_matrix(matrix: sp.spmatrix, path) -> None:
    """MatrixMarket dump for external conditioning studies."""
    from scipy.io import mmwrite
    mmwrite(str(path), matrix)
