"""Adaptive single-root quadtree mesh with 2:1 balance and hanging-entity catalog.

Cells are identified by (level, morton) keys. Integer arithmetic on the dyadic
grid at ``max_level`` resolution is used throughout so that geometric
predicates (adjacency, point location) are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

__all__ = [
    "CellId",
    "QuadtreeMesh",
    "HangingEntity",
    "AdaptChangeLog",
    "root_mesh",
    "uniform_mesh",
    "refine_and_coarsen",
    "collect_hanging_entities",
    "cell_geometry",
    "face_adjacency",
    "vertex_adjacency",
    "is_two_to_one_balanced",
    "leaves_to_csv",
]

REFINE = "refine"
COARSEN = "coarsen"
KEEP = "keep"

# side indices: 0 = -x, 1 = +x, 2 = -y, 3 = +y
SIDES = (0, 1, 2, 3)


class CellId(NamedTuple):
    level: int
    morton: int


def morton_encode(i: int, j: int, level: int) -> int:
    """Interleave bits of (i, j): i occupies even bits, j odd bits."""
    key = 0
    for b in range(level):
        key |= ((i >> b) & 1) << (2 * b)
        key |= ((j >> b) & 1) << (2 * b + 1)
    return key


def morton_decode(key: int, level: int) -> tuple[int, int]:
    i = j = 0
    for b in range(level):
        i |= ((key >> (2 * b)) & 1) << b
        j |= ((key >> (2 * b + 1)) & 1) << b
    return i, j


def children(c: CellId) -> tuple[CellId, CellId, CellId, CellId]:
    return tuple(CellId(c.level + 1, 4 * c.morton + k) for k in range(4))


def parent(c: CellId) -> CellId:
    if c.level == 0:
        raise ValueError("root cell has no parent")
    return CellId(c.level - 1, c.morton >> 2)


def sfc_key(c: CellId, max_level: int) -> int:
    """Space-filling-curve sort key, comparable across levels for non-overlapping cells."""
    return c.morton << (2 * (max_level - c.level))


@dataclass(frozen=True)
class QuadtreeMesh:
    """Leaves of a single-root quadtree tiling the box [0, side]^2."""

    side: float
    max_level: int
    leaves: tuple[CellId, ...]
    _leaf_set: frozenset = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_leaf_set", frozenset(self.leaves))

    @property
    def leaf_set(self) -> frozenset:
        return self._leaf_set

    def cell_bounds_int(self, c: CellId) -> tuple[int, int, int, int]:
        """(x0, y0, extent, level-shift) in finest-grid units."""
        if c.level > self.max_level:
            raise ValueError(f"cell level {c.level} exceeds max_level {self.max_level}")
        i, j = morton_decode(c.morton, c.level)
        shift = self.max_level - c.level
        return i << shift, j << shift, 1 << shift, shift

    def locate_int(self, xf: int, yf: int) -> CellId:
        """Leaf containing the finest-grid cell (xf, yf); exact integer walk from the root."""
        n = 1 << self.max_level
        if not (0 <= xf < n and 0 <= yf < n):
            raise ValueError(f"point ({xf},{yf}) outside root box")
        for lvl in range(self.max_level + 1):
            key = morton_encode(xf >> (self.max_level - lvl), yf >> (self.max_level - lvl), lvl)
            cand = CellId(lvl, key)
            if cand in self._leaf_set:
                return cand
        raise RuntimeError("leaf set does not tile the root box")

    def locate_point(self, x: float, y: float) -> CellId:
        """Leaf containing physical point (x, y); points on grid lines resolve upward."""
        n = 1 << self.max_level
        xf = min(max(int(x / self.side * n), 0), n - 1)
        yf = min(max(int(y / self.side * n), 0), n - 1)
        return self.locate_int(xf, yf)

    def leaves_touching_point(self, x: float, y: float, tol: float = 1e-12) -> list[CellId]:
        """All leaves whose closed box contains (x, y); up to 4 when on grid lines."""
        n = 1 << self.max_level
        h = self.side / n
        gx, gy = x / h, y / h
        xs = {min(max(int(gx), 0), n - 1)}
        ys = {min(max(int(gy), 0), n - 1)}
        if abs(gx - round(gx)) < tol and 0 < round(gx) < n:
            xs.update((int(round(gx)) - 1, int(round(gx))))
        if abs(gy - round(gy)) < tol and 0 < round(gy) < n:
            ys.update((int(round(gy)) - 1, int(round(gy))))
        found = {self.locate_int(xf, yf) for xf in sorted(xs) for yf in sorted(ys)}
        return sorted(found, key=lambda c: (sfc_key(c, self.max_level), c.level))


class HangingEntity(NamedTuple):
    """A coarse edge carrying a hanging midpoint vertex, with the two finer cells across it."""

    coarse_cell: CellId
    side: int                      # side of the coarse cell (0..3)
    endpoints: tuple[tuple[int, int], tuple[int, int]]   # finest-grid vertex coords
    midpoint: tuple[int, int]
    fine_cells: tuple[CellId, ...]


@dataclass(frozen=True)
class AdaptChangeLog:
    """Forest diff between two leaf sets, consumed by field transfer."""

    refined: dict          # old leaf -> tuple of new descendant leaves
    coarsened: dict        # new leaf -> tuple of old descendant leaves
    carried: tuple
    dropped_coarsen: tuple


def root_mesh(side: float, max_level: int) -> QuadtreeMesh:
    return QuadtreeMesh(side, max_level, (CellId(0, 0),))


def uniform_mesh(side: float, level: int, max_level: int) -> QuadtreeMesh:
    if level > max_level:
        raise ValueError("uniform level exceeds max_level")
    leaves = tuple(CellId(level, m) for m in range(4 ** level))
    return QuadtreeMesh(side, max_level, leaves)


def _sorted_leaves(leaves: Iterable[CellId], max_level: int) -> tuple[CellId, ...]:
    return tuple(sorted(leaves, key=lambda c: sfc_key(c, max_level)))


def _probe_points(mesh_max: int, c: CellId) -> list[tuple[int, int]]:
    """Probe points just outside each edge midpoint and corner, in doubled finest units."""
    i, j = morton_decode(c.morton, c.level)
    shift = mesh_max - c.level
    x0, y0 = i << (shift + 1), j << (shift + 1)
    sz = 1 << (shift + 1)
    x1, y1 = x0 + sz, y0 + sz
    xm, ym = x0 + sz // 2, y0 + sz // 2
    return [
        (x0 - 1, ym), (x1 + 1, ym), (xm, y0 - 1), (xm, y1 + 1),        # edges
        (x0 - 1, y0 - 1), (x1 + 1, y0 - 1), (x0 - 1, y1 + 1), (x1 + 1, y1 + 1),  # corners
    ]


def _locate_doubled(leaf_set: frozenset, max_level: int, xd: int, yd: int) -> CellId | None:
    """Locate in doubled units; None when outside the root box."""
    n2 = 1 << (max_level + 1)
    if not (0 <= xd < n2 and 0 <= yd < n2):
        return None
    xf, yf = xd >> 1, yd >> 1
    for lvl in range(max_level + 1):
        key = morton_encode(xf >> (max_level - lvl), yf >> (max_level - lvl), lvl)
        cand = CellId(lvl, key)
        if cand in leaf_set:
            return cand
    raise RuntimeError("leaf set does not tile the root box")


def _balance_closure(leaves: set[CellId], max_level: int) -> None:
    """Refine until full (edge + corner) 2:1 balance holds. Mutates ``leaves``."""
    frontier = list(leaves)
    while frontier:
        leaf_set = frozenset(leaves)
        to_split: set[CellId] = set()
        for c in frontier:
            if c not in leaves:
                continue
            for p in _probe_points(max_level, c):
                nb = _locate_doubled(leaf_set, max_level, *p)
                if nb is not None and c.level - nb.level >= 2:
                    to_split.add(nb)
        new_cells: list[CellId] = []
        for c in sorted(to_split, key=lambda c: sfc_key(c, max_level)):
            leaves.discard(c)
            kids = children(c)
            leaves.update(kids)
            new_cells.extend(kids)
        frontier = new_cells


def _diff_leaf_sets(old: frozenset, new: frozenset, dropped: tuple) -> AdaptChangeLog:
    refined: dict[CellId, list[CellId]] = {}
    coarsened: dict[CellId, list[CellId]] = {}
    carried: list[CellId] = []

    def old_ancestor(c: CellId) -> CellId | None:
        while c.level > 0:
            c = parent(c)
            if c in old:
                return c
        return None

    for c in sorted(new, key=lambda c: (c.level, c.morton)):
        if c in old:
            carried.append(c)
            continue
        anc = old_ancestor(c)
        if anc is not None:
            refined.setdefault(anc, []).append(c)
    for c in sorted(old, key=lambda c: (c.level, c.morton)):
        if c in new or c in refined:
            continue
        a = c
        while a.level > 0:
            a = parent(a)
            if a in new:
                coarsened.setdefault(a, []).append(c)
                break
        else:
            raise RuntimeError(f"old leaf {c} unaccounted in change log")
    return AdaptChangeLog(
        refined={k: tuple(v) for k, v in refined.items()},
        coarsened={k: tuple(v) for k, v in coarsened.items()},
        carried=tuple(carried),
        dropped_coarsen=dropped,
    )


def refine_and_coarsen(mesh: QuadtreeMesh, marks: Mapping[CellId, str]) -> tuple[QuadtreeMesh, AdaptChangeLog]:
    """Apply refine/coarsen marks, re-establish 2:1 balance, and return the change log.

    Coarsening is honored only for complete sibling quadruples all marked
    ``coarsen``; partial marks are dropped and recorded. Refinement past
    ``max_level`` is rejected.
    """
    leaf_set = mesh.leaf_set
    for c, m in marks.items():
        if m not in (REFINE, COARSEN, KEEP):
            raise ValueError(f"unknown mark {m!r}")
        if c not in leaf_set:
            raise ValueError(f"marked cell {c} is not a current leaf")
    refine_set = {c for c, m in marks.items() if m == REFINE}
    for c in refine_set:
        if c.level >= mesh.max_level:
            raise ValueError(f"cannot refine {c}: already at max_level {mesh.max_level}")
    coarsen_set = {c for c, m in marks.items() if m == COARSEN}

    by_parent: dict[CellId, list[CellId]] = {}
    for c in coarsen_set:
        if c.level == 0:
            continue
        by_parent.setdefault(parent(c), []).append(c)
    merge_parents = []
    dropped: list[CellId] = []
    for p, cs in sorted(by_parent.items(), key=lambda kv: (kv[0].level, kv[0].morton)):
        kids = children(p)
        if len(cs) == 4 and all(k in leaf_set for k in kids) and not (set(kids) & refine_set):
            merge_parents.append(p)
        else:
            dropped.extend(cs)
    dropped.extend(c for c in coarsen_set if c.level == 0)

    leaves = set(mesh.leaves)
    for p in merge_parents:
        for k in children(p):
            leaves.discard(k)
        leaves.add(p)
    for c in sorted(refine_set, key=lambda c: sfc_key(c, mesh.max_level)):
        leaves.discard(c)
        leaves.update(children(c))

    _balance_closure(leaves, mesh.max_level)

    new_mesh = QuadtreeMesh(mesh.side, mesh.max_level, _sorted_leaves(leaves, mesh.max_level))
    log = _diff_leaf_sets(mesh.leaf_set, new_mesh.leaf_set,
                          tuple(sorted(dropped, key=lambda c: (c.level, c.morton))))
    return new_mesh, log


def collect_hanging_entities(mesh: QuadtreeMesh) -> list[HangingEntity]:
    """One entry per coarse/fine edge interface with a level jump of exactly 1."""
    leaf_set = mesh.leaf_set
    found: dict[tuple[CellId, int], list[CellId]] = {}
    for c in mesh.leaves:
        i, j = morton_decode(c.morton, c.level)
        shift = mesh.max_level - c.level
        x0, y0 = i << (shift + 1), j << (shift + 1)
        sz = 1 << (shift + 1)
        xm, ym = x0 + sz // 2, y0 + sz // 2
        probes = [(x0 - 1, ym, 1), (x0 + sz + 1, ym, 0), (xm, y0 - 1, 3), (xm, y0 + sz + 1, 2)]
        for xd, yd, opposite_side in probes:
            nb = _locate_doubled(leaf_set, mesh.max_level, xd, yd)
            if nb is None or nb.level >= c.level:
                continue
            if c.level - nb.level > 1:
                raise ValueError(f"mesh not 2:1 balanced near {c} / {nb}")
            found.setdefault((nb, opposite_side), []).append(c)

    entities = []
    for (coarse, side), fines in sorted(found.items(),
                                        key=lambda kv: (sfc_key(kv[0][0], mesh.max_level), kv[0][1])):
        x0, y0, ext, _ = mesh.cell_bounds_int(coarse)
        if side == 0:
            a, b = (x0, y0), (x0, y0 + ext)
        elif side == 1:
            a, b = (x0 + ext, y0), (x0 + ext, y0 + ext)
        elif side == 2:
            a, b = (x0, y0), (x0 + ext, y0)
        else:
            a, b = (x0, y0 + ext), (x0 + ext, y0 + ext)
        mid = ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)
        entities.append(HangingEntity(coarse, side, (a, b), mid,
                                      tuple(sorted(fines, key=lambda c: sfc_key(c, mesh.max_level)))))
    return entities


def cell_geometry(mesh: QuadtreeMesh, c: CellId) -> tuple[tuple[float, float], float]:
    """Anchor point and side length h_T of a leaf cell."""
    if c not in mesh.leaf_set:
        raise ValueError(f"{c} is not a leaf of this mesh")
    i, j = morton_decode(c.morton, c.level)
    h = mesh.side / (1 << c.level)
    return (i * h, j * h), h


def face_adjacency(mesh: QuadtreeMesh, cells: Iterable[CellId] | None = None):
    """All face-adjacent leaf pairs with the shared segment.

    Returns a list of (a, b, axis, line, lo, hi): cells a and b share the
    segment on ``x=line`` (axis=0) or ``y=line`` (axis=1) between lo and hi,
    in finest-grid integer units.
    """
    if cells is None:
        cells = mesh.leaves
    vlines: dict[int, tuple[list, list]] = {}
    hlines: dict[int, tuple[list, list]] = {}
    for c in cells:
        x0, y0, ext, _ = mesh.cell_bounds_int(c)
        vlines.setdefault(x0 + ext, ([], []))[0].append((y0, y0 + ext, c))   # right side
        vlines.setdefault(x0, ([], []))[1].append((y0, y0 + ext, c))        # left side
        hlines.setdefault(y0 + ext, ([], []))[0].append((x0, x0 + ext, c))
        hlines.setdefault(y0, ([], []))[1].append((x0, x0 + ext, c))
    pairs = []
    for axis, lines in ((0, vlines), (1, hlines)):
        for line, (minus, plus) in sorted(lines.items()):
            for lo_a, hi_a, a in sorted(minus):
                for lo_b, hi_b, b in sorted(plus):
                    lo, hi = max(lo_a, lo_b), min(hi_a, hi_b)
                    if lo < hi:
                        pairs.append((a, b, axis, line, lo, hi))
    return pairs


def vertex_adjacency(mesh: QuadtreeMesh) -> list[tuple[CellId, CellId]]:
    """Leaf pairs sharing exactly one point (mutual corner)."""
    corner_map: dict[tuple[int, int], list[CellId]] = {}
    for c in mesh.leaves:
        x0, y0, ext, _ = mesh.cell_bounds_int(c)
        for v in ((x0, y0), (x0 + ext, y0), (x0, y0 + ext), (x0 + ext, y0 + ext)):
            corner_map.setdefault(v, []).append(c)
    seen = set()
    pairs = []
    for v, cs in sorted(corner_map.items()):
        for ia in range(len(cs)):
            for ib in range(ia + 1, len(cs)):
                a, b = cs[ia], cs[ib]
                xa, ya, ea, _ = mesh.cell_bounds_int(a)
                xb, yb, eb, _ = mesh.cell_bounds_int(b)
                touch_x = xa + ea == xb or xb + eb == xa
                touch_y = ya + ea == yb or yb + eb == ya
                if touch_x and touch_y and (a, b) not in seen:
                    seen.add((a, b))
                    pairs.append((a, b))
    return pairs


def is_two_to_one_balanced(mesh: QuadtreeMesh) -> bool:
    """Exhaustive adjacency scan of the full (edge + corner) 2:1 property."""
    for a, b, *_ in face_adjacency(mesh):
        if abs(a.level - b.level) > 1:
            return False
    for a, b in vertex_adjacency(mesh):
        if abs(a.level - b.level) > 1:
            return False
    return True


def leaves_to_csv(mesh: QuadtreeMesh) -> str:
    """Debug dump: morton, level, anchor_x, anchor_y, size."""
    lines = ["morton,level,anchor_x,anchor_y,size"]
    for c in mesh.leaves:
        (ax, ay), h = cell_geometry(mesh, c)
        lines.append(f"{c.morton},{c.level},{ax!r},{ay!r},{h!r}")
    return "\n".join(lines) + "\n"
