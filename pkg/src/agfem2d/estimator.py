"""Residual-based a-posteriori error estimation: stress-jump indicators per
cell, the energy-normalized global estimate, and fixed-fraction marking."""
from __future__ import annotations

import logging

import numpy as np

from .assembly import AssemblyContext, _b_matrices, _vector_dofs, energy_product
from .cutgeom import EXTERIOR, INTERIOR, clip_segment_to_domain
from .plasticity import stress_update_batch
from .quadrature import gauss_1d
from .quadtree import CellId, cell_geometry, face_adjacency, sfc_key

log = logging.getLogger(__name__)

__all__ = ["kelly_estimator", "global_error", "mark_cells"]


def _side_stress(ctx: AssemblyContext, u_full, hist_values, cells, points):
    """Stress (Voigt) per (cell, point) pair evaluated from that cell's side."""
    space = ctx.disc.space
    hist = ctx.disc.history
    n = len(cells)
    b = np.empty((n, 4, 8))
    rows = np.empty((n, 8), dtype=int)
    hdofs = np.empty((n, 4), dtype=int)
    hbas = np.empty((n, 4))
    for k, (cell, pt) in enumerate(zip(cells, points)):
        (ax, ay), h = cell_geometry(space.mesh, cell)
        local = (pt - np.array([ax, ay])) / h
        b[k] = _b_matrices(local[None, :], np.array([h]))[0]
        rows[k] = _vector_dofs(space.cell_nodes[cell][None, :])[0]
        hdofs[k] = hist.cell_dofs[cell]
        hbas[k] = hist.basis_at(cell, pt[None, :])[0]
    eps = np.einsum("qck,qk->qc", b, u_full[rows])
    alpha, ep = ctx._interp_history(hist_values, hdofs, hbas)
    sig, *_ = stress_update_batch(eps, alpha, ep, ctx.problem.material)
    return sig


def kelly_estimator(ctx: AssemblyContext, u_free: np.ndarray, hist_values,
                    load_factor: float) -> dict:
    """Per-cell indicators eta_T^2 = h_T * integral over (cell faces inside the
    domain) of ||[sigma . n]||^2, half-weighted per adjacent cell.

    Faces of cut cells are clipped to the domain by the level set; hanging
    interfaces are integrated on the fine side (face pairs are enumerated per
    fine-cell edge). Exterior cells get eta_T = 0; the unfitted boundary
    itself contributes no jump term.
    """
    disc = ctx.disc
    mesh = disc.mesh
    classes = disc.classes
    u_full = ctx.expand(u_free, load_factor)
    x1, w1 = gauss_1d(3)
    h0 = mesh.side / (1 << mesh.max_level)

    qp_cells_a, qp_cells_b, qp_points, qp_weights, qp_normals, qp_face = [], [], [], [], [], []
    face_pairs = []
    for a, b, axis, line, lo, hi in face_adjacency(mesh):
        if classes[a] == EXTERIOR or classes[b] == EXTERIOR:
            continue
        if axis == 0:
            p0 = np.array([line * h0, lo * h0])
            p1 = np.array([line * h0, hi * h0])
            normal = np.array([1.0, 0.0])
        else:
            p0 = np.array([lo * h0, line * h0])
            p1 = np.array([hi * h0, line * h0])
            normal = np.array([0.0, 1.0])
        if classes[a] == INTERIOR and classes[b] == INTERIOR:
            spans = [(0.0, 1.0)]
        else:
            spans = clip_segment_to_domain(disc.levelset, p0, p1)
        face_idx = len(face_pairs)
        face_pairs.append((a, b))
        seg = p1 - p0
        seg_len = float(np.hypot(*seg))
        for s0, s1 in spans:
            for xi, wi in zip(x1, w1):
                t = s0 + (s1 - s0) * xi
                qp_cells_a.append(a)
                qp_cells_b.append(b)
                qp_points.append(p0 + t * seg)
                qp_weights.append((s1 - s0) * wi * seg_len)
                qp_normals.append(normal)
                qp_face.append(face_idx)

    eta_sq = {c: 0.0 for c in mesh.leaves}
    if qp_points:
        pts = np.array(qp_points)
        wts = np.array(qp_weights)
        nrm = np.array(qp_normals)
        sig_a = _side_stress(ctx, u_full, hist_values, qp_cells_a, pts)
        sig_b = _side_stress(ctx, u_full, hist_values, qp_cells_b, pts)
        jump = sig_a - sig_b
        tx = jump[:, 0] * nrm[:, 0] + jump[:, 3] * nrm[:, 1]
        ty = jump[:, 3] * nrm[:, 0] + jump[:, 1] * nrm[:, 1]
        contrib = wts * (tx * tx + ty * ty)
        face_int = np.zeros(len(face_pairs))
        np.add.at(face_int, np.array(qp_face), contrib)
        for (a, b), val in zip(face_pairs, face_int):
            eta_sq[a] += 0.5 * cell_geometry(mesh, a)[1] * val
            eta_sq[b] += 0.5 * cell_geometry(mesh, b)[1] * val
    return {c: float(np.sqrt(v)) for c, v in eta_sq.items()}


def global_error(eta_map: dict, ctx: AssemblyContext, u_free: np.ndarray,
                 hist_values, load_factor: float) -> float:
    """eta_G = sqrt(sum eta_T^2 / A(u, u)) with the discrete energy norm in
    the denominator."""
    energy = energy_product(ctx, u_free, hist_values, load_factor)
    if energy <= 0.0:
        raise ValueError(f"discrete energy norm is non-positive ({energy:.3e}); "
                         "the global estimate is undefined at zero displacement")
    total = sum(v * v for v in eta_map.values())
    return float(np.sqrt(total / energy))


def mark_cells(eta_map: dict, theta_r: float, theta_c: float, classes: dict,
               max_level: int | None = None) -> dict:
    """Fixed-fraction marking: the ceil(theta_r * n_active) largest indicators
    refine, the floor(theta_c * n_active) smallest coarsen, ties broken toward
    lower Morton keys; exterior cells always keep."""
    active = [c for c in classes if classes[c] != EXTERIOR]
    marks = {c: "keep" for c in classes}
    if not active:
        return marks
    maxl = max_level if max_level is not None else max(c.level for c in classes)
    by_eta_desc = sorted(active, key=lambda c: (-eta_map.get(c, 0.0), sfc_key(c, maxl)))
    n_ref = int(np.ceil(theta_r * len(active))) if theta_r > 0 else 0
    for c in by_eta_desc[:n_ref]:
        marks[c] = "refine"
    n_coars = int(np.floor(theta_c * len(active))) if theta_c > 0 else 0
    by_eta_asc = sorted(active, key=lambda c: (eta_map.get(c, 0.0), sfc_key(c, maxl)))
    taken = 0
    for c in by_eta_asc:
        if taken >= n_coars:
            break
        if marks[c] == "keep":
            marks[c] = "coarsen"
            taken += 1
    return marks
