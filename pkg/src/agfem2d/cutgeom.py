"""Cell classification against a level set and marching-squares sub-triangulation
of cut cells, with volume and boundary quadratures."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .levelset import LevelSet
from .quadrature import Quadrature, segment_rule, triangle_area, triangle_rule
from .quadtree import CellId, QuadtreeMesh, cell_geometry

log = logging.getLogger(__name__)

__all__ = ["INTERIOR", "CUT", "EXTERIOR", "CutGeometry", "classify_cells",
           "triangulate_cut_cell", "intersect_domain"]

INTERIOR = "interior"
CUT = "cut"
EXTERIOR = "exterior"

# sample pattern within the unit cell: corners, three interior points per edge, center
_SAMPLE_T = (0.25, 0.5, 0.75)
_UNIT_SAMPLES = np.array(
    [(0, 0), (1, 0), (0, 1), (1, 1)]
    + [(t, 0) for t in _SAMPLE_T] + [(t, 1) for t in _SAMPLE_T]
    + [(0, t) for t in _SAMPLE_T] + [(1, t) for t in _SAMPLE_T]
    + [(0.5, 0.5)],
    dtype=float,
)


@dataclass
class CutGeometry:
    """Sub-mesh of one cut cell: triangles covering T ∩ Ω plus straight
    boundary segments approximating T ∩ ∂Ω with outward unit normals."""

    triangles: list                      # each (3, 2) array, CCW
    boundary_segments: list              # each (p, q, normal)
    volume_quadrature: Quadrature
    boundary_quadrature: Quadrature | None
    boundary_normals: np.ndarray         # (nq, 2), one normal per boundary point

    @property
    def area(self) -> float:
        return float(sum(triangle_area(*t) for t in self.triangles))


def classify_cells(mesh: QuadtreeMesh, ls: LevelSet) -> dict[CellId, str]:
    """Classify every leaf from level-set signs at corners plus edge/center samples.

    A cell with all samples <= 0 (and at least one strictly negative) is
    interior; all samples >= 0 with one strictly positive is exterior; a
    vanishing-everywhere sample set is degenerate and classified cut with a
    warning; any strict sign change means cut.
    """
    leaves = mesh.leaves
    xs = np.empty((len(leaves), len(_UNIT_SAMPLES)))
    ys = np.empty_like(xs)
    for k, c in enumerate(leaves):
        (ax, ay), h = cell_geometry(mesh, c)
        xs[k] = ax + h * _UNIT_SAMPLES[:, 0]
        ys[k] = ay + h * _UNIT_SAMPLES[:, 1]
    phi = np.asarray(ls(xs, ys), dtype=float)
    lo = phi.min(axis=1)
    hi = phi.max(axis=1)
    classes: dict[CellId, str] = {}
    for k, c in enumerate(leaves):
        if hi[k] <= 0.0 and lo[k] < 0.0:
            classes[c] = INTERIOR
        elif lo[k] >= 0.0 and hi[k] > 0.0:
            classes[c] = EXTERIOR
        else:
            if lo[k] == 0.0 and hi[k] == 0.0:
                log.warning("level set vanishes identically on cell %s; classified cut", (c,))
            classes[c] = CUT
    return classes


def _edge_root(ls: LevelSet, p_in, p_out, iters: int = 30) -> np.ndarray:
    """Root of phi along the segment from an inside (phi<=0) to an outside
    (phi>0) endpoint: bisection plus a final secant step, which is exact for
    linear level sets."""
    a = np.asarray(p_in, float)
    b = np.asarray(p_out, float)
    fa = float(ls(a[0], a[1]))
    fb = float(ls(b[0], b[1]))
    if fa == 0.0:
        return a.copy()
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = float(ls(m[0], m[1]))
        if fm <= 0.0:
            a, fa = m, fm
        else:
            b, fb = m, fm
    t = fa / (fa - fb)
    return a + t * (b - a)


def _dedupe_ring(vertices: list[np.ndarray], tol: float) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for v in vertices:
        if not out or np.hypot(*(v - out[-1])) > tol:
            out.append(v)
    while len(out) > 1 and np.hypot(*(out[0] - out[-1])) <= tol:
        out.pop()
    return out


def _polygon_pieces(anchor, size: float, ls: LevelSet) -> list[list[np.ndarray]]:
    """CCW polygon(s) bounding (cell ∩ Ω) under linear interface reconstruction."""
    ax, ay = anchor
    corners = [np.array([ax, ay]), np.array([ax + size, ay]),
               np.array([ax + size, ay + size]), np.array([ax, ay + size])]
    phi = [float(ls(c[0], c[1])) for c in corners]
    inside = [v <= 0.0 for v in phi]
    tol = 1e-12 * size

    # ambiguous saddle: diagonally opposite inside corners
    if inside == [True, False, True, False] or inside == [False, True, False, True]:
        center_in = float(ls(ax + 0.5 * size, ay + 0.5 * size)) <= 0.0
        if not center_in:
            pieces = []
            for k in range(4):
                if inside[k]:
                    r_prev = _edge_root(ls, corners[k], corners[(k - 1) % 4])
                    r_next = _edge_root(ls, corners[k], corners[(k + 1) % 4])
                    pieces.append(_dedupe_ring([corners[k], r_next, r_prev], tol))
            return [p for p in pieces if len(p) >= 3]

    ring: list[np.ndarray] = []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        if inside[k]:
            ring.append(a)
        if inside[k] != inside[(k + 1) % 4]:
            p_in, p_out = (a, b) if inside[k] else (b, a)
            ring.append(_edge_root(ls, p_in, p_out))
    ring = _dedupe_ring(ring, tol)
    return [ring] if len(ring) >= 3 else []


def _on_same_cell_side(p, q, anchor, size: float, tol: float) -> bool:
    ax, ay = anchor
    for line in (ax, ax + size):
        if abs(p[0] - line) <= tol and abs(q[0] - line) <= tol:
            return True
    for line in (ay, ay + size):
        if abs(p[1] - line) <= tol and abs(q[1] - line) <= tol:
            return True
    return False


def _arc_point(ls: LevelSet, p, q, anchor, size: float) -> np.ndarray | None:
    """Point of the true interface near the chord midpoint, found along the
    chord normal; None when the interface is locally straight (or the search
    fails), in which case the chord is kept as a single segment."""
    m = 0.5 * (p + q)
    d = q - p
    clen = float(np.hypot(*d))
    n = np.array([d[1], -d[0]]) / clen
    fm = float(ls(m[0], m[1]))
    if abs(fm) <= 1e-13 * size:
        return None
    direction = n if fm < 0.0 else -n
    reach = 0.75 * clen
    ts = np.linspace(0.0, reach, 17)
    prev_t, prev_f = 0.0, fm
    root_t = None
    for t in ts[1:]:
        pt = m + t * direction
        f = float(ls(pt[0], pt[1]))
        if (prev_f < 0.0) != (f < 0.0) or f == 0.0:
            a, b = prev_t, t
            fa, fb = prev_f, f
            for _ in range(40):
                mid = 0.5 * (a + b)
                fmid = float(ls(*(m + mid * direction)))
                if (fa < 0.0) != (fmid < 0.0):
                    b, fb = mid, fmid
                else:
                    a, fa = mid, fmid
            root_t = a + (b - a) * (fa / (fa - fb) if fa != fb else 0.5)
            break
        prev_t, prev_f = t, f
    if root_t is None:
        return None
    star = m + root_t * direction
    # keep the single chord when the interface is straight to tolerance
    if abs(root_t) <= 1e-9 * size:
        return None
    ax, ay = anchor
    eps = 1e-12 * size
    if not (ax - eps <= star[0] <= ax + size + eps and ay - eps <= star[1] <= ay + size + eps):
        return None
    return star


def _ear_clip(ring: list[np.ndarray], area_tol: float) -> list[tuple]:
    """Triangulate a simple CCW polygon by ear clipping; collinear vertices are
    dropped, degenerate ears discarded."""
    verts = list(ring)
    tris = []
    guard = 0
    while len(verts) > 3 and guard < 1000:
        guard += 1
        nv = len(verts)
        clipped = False
        for i in range(nv):
            a, b, c = verts[(i - 1) % nv], verts[i], verts[(i + 1) % nv]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross < -area_tol:
                continue                      # reflex vertex, not an ear
            contains = False
            for j in range(nv):
                if j in ((i - 1) % nv, i, (i + 1) % nv):
                    continue
                if _point_in_triangle(verts[j], a, b, c, area_tol):
                    contains = True
                    break
            if contains:
                continue
            if cross > 2.0 * area_tol:
                tris.append((a, b, c))
            verts.pop(i)
            clipped = True
            break
        if not clipped:
            break                              # should not happen for simple polygons
    if len(verts) == 3:
        a, b, c = verts
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if cross > 2.0 * area_tol:
            tris.append((a, b, c))
    return tris


def _point_in_triangle(p, a, b, c, tol: float) -> bool:
    d1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    d2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
    d3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
    return d1 > tol and d2 > tol and d3 > tol


def triangulate_cut_cell(anchor, size: float, ls: LevelSet,
                         volume_degree: int = 4, boundary_points: int = 3) -> CutGeometry:
    """Marching-squares reconstruction of cell ∩ Ω.

    Edge roots are located by bisection on the level set (robust for
    non-linear level sets); saddle configurations are resolved by the sign of
    the cell-center value. The interior polygon is fan-triangulated and
    equipped with a simplex quadrature; the interface chords carry Gauss rules
    and outward unit normals.
    """
    tol = 1e-12 * size
    pieces = _polygon_pieces(anchor, size, ls)

    triangles = []
    segments = []
    for ring in pieces:
        # split each interface chord at a mid-arc point so curved interfaces
        # are resolved by two segments per crossed cell
        refined: list[np.ndarray] = []
        for k in range(len(ring)):
            p, q = ring[k], ring[(k + 1) % len(ring)]
            refined.append(p)
            if (np.hypot(*(q - p)) > tol
                    and not _on_same_cell_side(p, q, anchor, size, tol)):
                star = _arc_point(ls, p, q, anchor, size)
                if star is not None:
                    refined.append(star)
        ring = refined
        for t in _ear_clip(ring, 1e-14 * size * size):
            triangles.append(np.array(t))
        for k in range(len(ring)):
            p, q = ring[k], ring[(k + 1) % len(ring)]
            if np.hypot(*(q - p)) <= tol:
                continue
            if _on_same_cell_side(p, q, anchor, size, tol):
                continue
            d = q - p
            n = np.array([d[1], -d[0]]) / np.hypot(*d)   # outward for a CCW ring
            segments.append((p, q, n))

    if triangles:
        parts = [triangle_rule(*t, degree=volume_degree) for t in triangles]
        vol_q = Quadrature(np.vstack([p.points for p in parts]),
                           np.concatenate([p.weights for p in parts]))
    else:
        vol_q = Quadrature(np.zeros((0, 2)), np.zeros(0))

    if segments:
        rules = [segment_rule(p, q, boundary_points) for p, q, _ in segments]
        bnd_q = Quadrature(np.vstack([r.points for r in rules]),
                           np.concatenate([r.weights for r in rules]))
        normals = np.vstack([np.tile(n, (boundary_points, 1)) for _, _, n in segments])
    else:
        bnd_q = None
        normals = np.zeros((0, 2))

    return CutGeometry(triangles, segments, vol_q, bnd_q, normals)


def clip_segment_to_domain(ls: LevelSet, p, q, nscan: int = 9) -> list[tuple[float, float]]:
    """Parameter sub-intervals of the segment p->q lying inside the domain."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    ts = np.linspace(0.0, 1.0, nscan)
    phis = [float(ls(*(p + t * (q - p)))) for t in ts]
    cuts = [0.0]
    for k in range(nscan - 1):
        if (phis[k] <= 0.0) != (phis[k + 1] <= 0.0):
            a, b = float(ts[k]), float(ts[k + 1])
            fa, fb = phis[k], phis[k + 1]
            for _ in range(40):
                m = 0.5 * (a + b)
                fm = float(ls(*(p + m * (q - p))))
                if (fa <= 0.0) != (fm <= 0.0):
                    b, fb = m, fm
                else:
                    a, fa = m, fm
            cuts.append(a + (b - a) * (fa / (fa - fb)) if fa != fb else 0.5 * (a + b))
    cuts.append(1.0)
    kept = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 1e-12:
            continue
        mid = p + 0.5 * (a + b) * (q - p)
        if float(ls(mid[0], mid[1])) <= 0.0:
            kept.append((a, b))
    return kept


def intersect_domain(mesh: QuadtreeMesh, ls: LevelSet, volume_degree: int = 4,
                     boundary_points: int = 3):
    """Classify all cells and build cut-cell geometry.

    Cut cells whose reconstructed intersection has (near) zero measure are
    reclassified exterior so they never carry degrees of freedom.

    Returns (classes, cut_geometry) with cut_geometry keyed by cut CellId.
    """
    classes = classify_cells(mesh, ls)
    cutgeo: dict[CellId, CutGeometry] = {}
    for c in mesh.leaves:
        if classes[c] != CUT:
            continue
        (ax, ay), h = cell_geometry(mesh, c)
        geo = triangulate_cut_cell((ax, ay), h, ls, volume_degree, boundary_points)
        if geo.area <= 1e-12 * h * h:
            classes[c] = EXTERIOR
            log.debug("cut cell %s has zero-measure intersection; reclassified exterior", (c,))
            continue
        cutgeo[c] = geo
    return classes, cutgeo
