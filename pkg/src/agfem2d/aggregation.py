"""Cell aggregation: attach every cut cell to exactly one interior root cell
by a multi-source frontier sweep over face-connected active cells."""
from __future__ import annotations

from dataclasses import dataclass

from .cutgeom import CUT, INTERIOR
from .quadtree import CellId, QuadtreeMesh, face_adjacency, sfc_key

__all__ = ["AggregateMap", "build_aggregates", "active_face_neighbors"]


@dataclass(frozen=True)
class AggregateMap:
    """root_of maps every cut cell to its interior root; members_of lists each
    aggregate (root included). Interior cells not rooting any cut cell form
    singleton aggregates."""

    root_of: dict
    members_of: dict

    def aggregate_sizes(self) -> dict:
        return {r: len(m) for r, m in self.members_of.items()}


def active_face_neighbors(mesh: QuadtreeMesh, classes: dict) -> dict[CellId, list[CellId]]:
    """Face-neighbor lists restricted to active (interior or cut) cells."""
    active = [c for c in mesh.leaves if classes[c] != "exterior"]
    nbrs: dict[CellId, list[CellId]] = {c: [] for c in active}
    active_set = set(active)
    for a, b, *_ in face_adjacency(mesh, active):
        if a in active_set and b in active_set:
            nbrs[a].append(b)
            nbrs[b].append(a)
    for c in nbrs:
        nbrs[c].sort(key=lambda x: sfc_key(x, mesh.max_level))
    return nbrs


def build_aggregates(mesh: QuadtreeMesh, classes: dict) -> AggregateMap:
    """Frontier sweep: pass k attaches every unassigned cut cell face-touching a
    cell assigned in pass k-1 (pass 0 = interior cells), inheriting the root of
    the touching neighbor with the lowest space-filling-curve key.
    """
    interior = [c for c in mesh.leaves if classes.get(c) == INTERIOR]
    cut = [c for c in mesh.leaves if classes.get(c) == CUT]
    if cut and not interior:
        raise ValueError("cannot aggregate: no interior cells exist")

    nbrs = active_face_neighbors(mesh, classes)
    root_of: dict[CellId, CellId] = {}
    assigned_prev = set(interior)
    root = {c: c for c in interior}
    unassigned = set(cut)

    while unassigned:
        newly: dict[CellId, CellId] = {}
        for c in sorted(unassigned, key=lambda x: sfc_key(x, mesh.max_level)):
            candidates = [n for n in nbrs[c] if n in assigned_prev]
            if candidates:
                best = min(candidates, key=lambda x: (sfc_key(x, mesh.max_level), x.level))
                newly[c] = root[best]
        if not newly:
            offenders = sorted(unassigned, key=lambda x: sfc_key(x, mesh.max_level))
            raise ValueError(
                "isolated cut cells with no face path to an interior cell: "
                + ", ".join(f"(level={c.level}, morton={c.morton})" for c in offenders)
            )
        for c, r in newly.items():
            root[c] = r
            root_of[c] = r
        assigned_prev = set(newly)
        unassigned -= assigned_prev

    members: dict[CellId, list[CellId]] = {r: [r] for r in interior}
    for c, r in root_of.items():
        members[r].append(c)
    members_of = {r: tuple(sorted(m, key=lambda x: sfc_key(x, mesh.max_level)))
                  for r, m in members.items()}
    return AggregateMap(root_of=root_of, members_of=members_of)
