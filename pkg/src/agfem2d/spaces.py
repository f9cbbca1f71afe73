"""Constrained Q1 finite element spaces on the active cells.

Continuous space: nodal DOFs at active-cell vertices; hanging midpoints are
constrained for trace continuity, and nodal DOFs supported only on cut cells
(ill-posed) are constrained to the bilinear extension of their owner
aggregate's root cell. Discontinuous history space: one DOF per tensor-product
Gauss node per active cell, optionally aggregated the same way.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .aggregation import AggregateMap
from .cutgeom import CUT, EXTERIOR
from .quadtree import (CellId, HangingEntity, QuadtreeMesh, cell_geometry,
                       morton_decode, sfc_key)

log = logging.getLogger(__name__)

__all__ = ["ConstraintRow", "ScalarQ1Space", "HistoryLayout", "GAUSS2",
            "build_continuous_space", "build_history_space", "constraints_to_csv"]

# 1D 2-point Gauss abscissae on [0, 1]; also the history-node positions.
GAUSS2 = ((1.0 - 1.0 / math.sqrt(3.0)) / 2.0, (1.0 + 1.0 / math.sqrt(3.0)) / 2.0)

# local Q1 corner ordering (x fastest): (0,0), (1,0), (0,1), (1,1)
_CORNERS = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])


class ConstraintRow(NamedTuple):
    constrained: int
    masters: tuple            # ((dof, coefficient), ...)


def lagrange2(nodes: tuple[float, float], x):
    """The two 1D Lagrange basis values on a pair of nodes."""
    a, b = nodes
    x = np.asarray(x, float)
    return (x - b) / (a - b), (x - a) / (b - a)


def lagrange2_deriv(nodes: tuple[float, float]):
    a, b = nodes
    return 1.0 / (a - b), 1.0 / (b - a)


def bilinear_basis(nodes_x, nodes_y, pts) -> np.ndarray:
    """(npts, 4) tensor-product basis at local coordinates, x-fastest ordering."""
    pts = np.asarray(pts, float).reshape(-1, 2)
    lx0, lx1 = lagrange2(nodes_x, pts[:, 0])
    ly0, ly1 = lagrange2(nodes_y, pts[:, 1])
    return np.column_stack([lx0 * ly0, lx1 * ly0, lx0 * ly1, lx1 * ly1])


def bilinear_grad(nodes_x, nodes_y, pts) -> np.ndarray:
    """(npts, 4, 2) local-coordinate gradients of the tensor-product basis."""
    pts = np.asarray(pts, float).reshape(-1, 2)
    lx0, lx1 = lagrange2(nodes_x, pts[:, 0])
    ly0, ly1 = lagrange2(nodes_y, pts[:, 1])
    dx0, dx1 = lagrange2_deriv(nodes_x)
    dy0, dy1 = lagrange2_deriv(nodes_y)
    g = np.empty((pts.shape[0], 4, 2))
    g[:, 0, 0] = dx0 * ly0
    g[:, 1, 0] = dx1 * ly0
    g[:, 2, 0] = dx0 * ly1
    g[:, 3, 0] = dx1 * ly1
    g[:, 0, 1] = lx0 * dy0
    g[:, 1, 1] = lx1 * dy0
    g[:, 2, 1] = lx0 * dy1
    g[:, 3, 1] = lx1 * dy1
    return g


@dataclass
class ScalarQ1Space:
    """One displacement component's DOF handler: free + constrained nodes with
    fully resolved constraint rows (all masters free)."""

    mesh: QuadtreeMesh
    classes: dict
    cells: tuple                        # active cells, SFC order
    node_coords_int: np.ndarray         # (n, 2), finest-grid vertex coords
    node_coords: np.ndarray             # (n, 2), physical
    node_index: dict                    # (ix, iy) -> node id
    cell_nodes: dict                    # CellId -> (4,) node ids, x-fastest
    node_kind: np.ndarray               # 'free' | 'hanging' | 'ill'
    constraints: dict                   # node -> ((master, coef), ...), resolved
    hanging_rows: dict = field(default_factory=dict)      # pre-resolution
    aggregation_rows: dict = field(default_factory=dict)  # pre-resolution

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_kind == "free")

    @property
    def constrained_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_kind != "free")

    def constraint_rows(self) -> list[ConstraintRow]:
        return [ConstraintRow(n, m) for n, m in sorted(self.constraints.items())]

    def expansion_matrix(self):
        """Sparse R with full_values = R @ values_at_free_nodes."""
        import scipy.sparse as sp

        free = self.free_nodes
        slot = -np.ones(self.n_nodes, dtype=int)
        slot[free] = np.arange(free.size)
        rows, cols, vals = [], [], []
        for n in free:
            rows.append(n)
            cols.append(slot[n])
            vals.append(1.0)
        for n, masters in self.constraints.items():
            for m, c in masters:
                rows.append(n)
                cols.append(slot[m])
                vals.append(c)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, free.size))

    def fill_constrained(self, full_values: np.ndarray) -> np.ndarray:
        """Derive constrained entries from the (already set) free entries."""
        for n, masters in self.constraints.items():
            full_values[n] = sum(c * full_values[m] for m, c in masters)
        return full_values

    def cell_frame(self, cell: CellId):
        (ax, ay), h = cell_geometry(self.mesh, cell)
        return np.array([ax, ay]), h

    def evaluate(self, cell: CellId, full_values: np.ndarray, points, with_grad: bool = False):
        """Lagrangian interpolation on one cell at physical points.

        Points outside the cell box are permitted (polynomial extrapolation)
        and flagged at debug level.
        """
        anchor, h = self.cell_frame(cell)
        pts = np.asarray(points, float).reshape(-1, 2)
        local = (pts - anchor) / h
        if np.any(local < -1e-9) or np.any(local > 1 + 1e-9):
            log.debug("evaluating outside cell %s (extrapolation)", (cell,))
        basis = bilinear_basis((0.0, 1.0), (0.0, 1.0), local)
        vals = basis @ full_values[self.cell_nodes[cell]]
        if not with_grad:
            return vals
        grads = bilinear_grad((0.0, 1.0), (0.0, 1.0), local) / h
        gvals = np.einsum("pkd,k->pd", grads, full_values[self.cell_nodes[cell]])
        return vals, gvals


def _resolve_chains(rows: dict) -> dict:
    """Rewrite every constraint so all masters are unconstrained nodes.

    Hanging and aggregation rows may reference each other (an ill node's root
    corner can hang, and a hanging master can be ill), and with mixed-level
    aggregates the reference graph can even contain cycles. The constrained
    block is therefore resolved as a linear system,
        (I - C_cc) v_c = C_cf v_f,
    which coincides with plain chain substitution whenever the graph is
    acyclic. A singular block (degenerate geometry) is a hard error.
    """
    if not rows:
        return {}
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    cons = sorted(rows)
    cidx = {n: k for k, n in enumerate(cons)}
    free_masters = sorted({m for masters in rows.values() for m, _ in masters
                           if m not in cidx})
    fidx = {n: k for k, n in enumerate(free_masters)}
    ncs, nfr = len(cons), len(free_masters)
    ccc = sp.lil_matrix((ncs, ncs))
    ccf = sp.lil_matrix((ncs, nfr))
    for n, masters in rows.items():
        for m, c in masters:
            if m in cidx:
                ccc[cidx[n], cidx[m]] = c
            else:
                ccf[cidx[n], fidx[m]] = c
    lhs = (sp.identity(ncs, format="csc") - ccc.tocsc())
    try:
        x = spla.spsolve(lhs, ccf.tocsc())
    except RuntimeError as exc:
        raise RuntimeError("cyclic constraint chain could not be resolved "
                           f"(singular block): {exc}") from exc
    x = sp.csr_matrix(x.reshape(ncs, nfr) if not sp.issparse(x) else x)
    if not np.all(np.isfinite(x.data)):
        raise RuntimeError("cyclic constraint chain could not be resolved (singular block)")
    resolved = {}
    for n in cons:
        row = x.getrow(cidx[n])
        masters = tuple(sorted((free_masters[j], float(v))
                               for j, v in zip(row.indices, row.data) if abs(v) > 1e-14))
        resolved[n] = masters
    return resolved


def build_continuous_space(mesh: QuadtreeMesh, classes: dict, aggregates: AggregateMap | None,
                           hanging: list[HangingEntity], aggregate: bool = True) -> ScalarQ1Space:
    """Construct the continuous Q1 space on active cells.

    Hanging midpoints get trace-continuity rows (coefficients 0.5/0.5); with
    ``aggregate`` on, non-hanging nodes supported only by cut cells are
    constrained to the bilinear extension of their owner aggregate's root
    cell, owner chosen by lowest root space-filling-curve key. Chains are
    resolved so that every master is a free node.
    """
    active = tuple(c for c in mesh.leaves if classes[c] != EXTERIOR)
    node_index: dict[tuple[int, int], int] = {}
    coords_int: list[tuple[int, int]] = []
    cell_nodes: dict[CellId, np.ndarray] = {}
    touching: dict[int, list[CellId]] = {}

    for c in active:
        x0, y0, ext, _ = mesh.cell_bounds_int(c)
        ids = []
        for dx, dy in ((0, 0), (ext, 0), (0, ext), (ext, ext)):
            key = (x0 + dx, y0 + dy)
            nid = node_index.get(key)
            if nid is None:
                nid = len(coords_int)
                node_index[key] = nid
                coords_int.append(key)
                touching[nid] = []
            touching[nid].append(c)
            ids.append(nid)
        cell_nodes[c] = np.array(ids, dtype=int)

    n = len(coords_int)
    coords_int_arr = np.array(coords_int, dtype=np.int64).reshape(n, 2)
    scale = mesh.side / (1 << mesh.max_level)
    coords = coords_int_arr * scale

    hanging_rows: dict[int, tuple] = {}
    for ent in hanging:
        if classes.get(ent.coarse_cell) == EXTERIOR:
            continue
        mid = node_index.get(ent.midpoint)
        if mid is None:
            continue
        pa = node_index[ent.endpoints[0]]
        pb = node_index[ent.endpoints[1]]
        hanging_rows[mid] = ((pa, 0.5), (pb, 0.5))

    aggregation_rows: dict[int, tuple] = {}
    if aggregate:
        if aggregates is None:
            raise ValueError("aggregate map required when aggregation is enabled")

        def extension_row(nid: int, root: CellId):
            """Root-basis extension at node nid, with hanging corners
            pre-substituted and any self-reference renormalized away; None when
            the relation degenerates (no information on nid)."""
            (ax, ay), h = cell_geometry(mesh, root)
            local = (coords[nid] - np.array([ax, ay])) / h
            basis = bilinear_basis((0.0, 1.0), (0.0, 1.0), local[None, :])[0]
            acc: dict[int, float] = {}
            stack = [(int(m), float(b)) for m, b in zip(cell_nodes[root], basis)]
            guard = 0
            while stack and guard < 64:
                guard += 1
                m, b = stack.pop()
                if abs(b) < 1e-14:
                    continue
                if m in hanging_rows:
                    stack.extend((mm, b * cc) for mm, cc in hanging_rows[m])
                else:
                    acc[m] = acc.get(m, 0.0) + b
            c_self = acc.pop(nid, 0.0)
            if abs(1.0 - c_self) <= 1e-9:
                return None
            scale = 1.0 / (1.0 - c_self)
            return tuple(sorted((m, c * scale) for m, c in acc.items() if abs(c * scale) > 1e-14))

        for nid in range(n):
            if nid in hanging_rows:
                continue
            cells_touch = touching[nid]
            if not all(classes[c] == CUT for c in cells_touch):
                continue
            roots = sorted({aggregates.root_of[c] for c in cells_touch},
                           key=lambda r: sfc_key(r, mesh.max_level))
            for owner in roots:
                masters = extension_row(nid, owner)
                if masters is not None:
                    aggregation_rows[nid] = masters
                    break
            else:
                log.warning("ill-posed node %d has only degenerate extensions; left free", nid)

    rows = dict(hanging_rows)
    rows.update(aggregation_rows)
    resolved = _resolve_chains(rows)

    kind = np.full(n, "free", dtype=object)
    for nid in hanging_rows:
        kind[nid] = "hanging"
    for nid in aggregation_rows:
        kind[nid] = "ill"

    return ScalarQ1Space(mesh=mesh, classes=classes, cells=active,
                         node_coords_int=coords_int_arr, node_coords=coords,
                         node_index=node_index, cell_nodes=cell_nodes,
                         node_kind=kind, constraints=resolved,
                         hanging_rows=hanging_rows, aggregation_rows=aggregation_rows)


@dataclass
class HistoryLayout:
    """Discontinuous per-cell history space collocated at 2x2 Gauss nodes.

    In the aggregated flavor, cut-cell DOFs are constrained to the root
    cell's Gauss-node Lagrangian basis extension; in the standard flavor all
    DOFs are free.
    """

    mesh: QuadtreeMesh
    classes: dict
    flavor: str                         # 'standard' | 'aggregated'
    cells: tuple
    cell_dofs: dict                     # CellId -> (4,) dof ids
    node_coords: np.ndarray             # (ndofs, 2)
    free_mask: np.ndarray               # (ndofs,) bool
    constrained_cells: tuple            # cut cells with constraint blocks
    constraint_blocks: dict             # cut cell -> (root cell, (4,4) matrix)

    @property
    def n_dofs(self) -> int:
        return self.node_coords.shape[0]

    def apply_constraints(self, values: np.ndarray) -> np.ndarray:
        """Overwrite cut-cell DOF rows from their root cells (aggregated flavor)."""
        if self.flavor != "aggregated":
            return values
        for c in self.constrained_cells:
            root, m = self.constraint_blocks[c]
            values[self.cell_dofs[c]] = m @ values[self.cell_dofs[root]]
        return values

    def basis_at(self, cell: CellId, points) -> np.ndarray:
        """(npts, 4) Gauss-node Lagrange basis of a cell at physical points."""
        (ax, ay), h = cell_geometry(self.mesh, cell)
        pts = np.asarray(points, float).reshape(-1, 2)
        local = (pts - np.array([ax, ay])) / h
        return bilinear_basis(GAUSS2, GAUSS2, local)

    def evaluate(self, cell: CellId, values: np.ndarray, points) -> np.ndarray:
        return self.basis_at(cell, points) @ values[self.cell_dofs[cell]]


def build_history_space(mesh: QuadtreeMesh, classes: dict, aggregates: AggregateMap | None,
                        flavor: str = "aggregated") -> HistoryLayout:
    if flavor not in ("standard", "aggregated"):
        raise ValueError(f"unknown history-space flavor {flavor!r}")
    active = tuple(c for c in mesh.leaves if classes[c] != EXTERIOR)
    cell_dofs: dict[CellId, np.ndarray] = {}
    coords = []
    for c in active:
        (ax, ay), h = cell_geometry(mesh, c)
        base = len(coords)
        for gy in GAUSS2:
            for gx in GAUSS2:
                coords.append((ax + h * gx, ay + h * gy))
        cell_dofs[c] = np.arange(base, base + 4)
    coords = np.asarray(coords, float).reshape(-1, 2)

    free = np.ones(coords.shape[0], dtype=bool)
    blocks: dict[CellId, tuple] = {}
    constrained: list[CellId] = []
    if flavor == "aggregated":
        if aggregates is None:
            raise ValueError("aggregate map required for the aggregated flavor")
        for c in active:
            if classes[c] != CUT:
                continue
            root = aggregates.root_of[c]
            (rax, ray), rh = cell_geometry(mesh, root)
            local = (coords[cell_dofs[c]] - np.array([rax, ray])) / rh
            m = bilinear_basis(GAUSS2, GAUSS2, local)
            blocks[c] = (root, m)
            constrained.append(c)
            free[cell_dofs[c]] = False

    return HistoryLayout(mesh=mesh, classes=classes, flavor=flavor, cells=active,
                         cell_dofs=cell_dofs, node_coords=coords, free_mask=free,
                         constrained_cells=tuple(constrained), constraint_blocks=blocks)


def constraints_to_csv(space: ScalarQ1Space) -> str:
    """Diagnostic dump of resolved constraint rows."""
    lines = ["constrained,kind,master,coefficient"]
    for n, masters in sorted(space.constraints.items()):
        for m, c in masters:
            lines.append(f"{n},{space.node_kind[n]},{m},{c!r}")
    return "\n".join(lines) + "\n"
