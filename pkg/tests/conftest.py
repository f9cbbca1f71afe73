import numpy as np

from agfem2d.aggregation import build_aggregates
from agfem2d.cutgeom import CUT, intersect_domain
from agfem2d.quadtree import collect_hanging_entities
from agfem2d.spaces import build_continuous_space, build_history_space


def build_pipeline(mesh, ls, aggregate=True, flavor="aggregated"):
    """Mesh + level set -> (classes, cutgeo, aggregates, hanging, space, history)."""
    classes, cutgeo = intersect_domain(mesh, ls)
    has_cut = any(v == CUT for v in classes.values())
    aggregates = build_aggregates(mesh, classes) if (aggregate or flavor == "aggregated") and has_cut else None
    if (aggregate or flavor == "aggregated") and not has_cut:
        aggregates = build_aggregates(mesh, classes)
    hanging = collect_hanging_entities(mesh)
    space = build_continuous_space(mesh, classes, aggregates, hanging, aggregate=aggregate)
    history = build_history_space(mesh, classes, aggregates, flavor=flavor)
    return classes, cutgeo, aggregates, hanging, space, history


def random_point_in_cell(rng, mesh, cell, margin=0.02):
    from agfem2d.quadtree import cell_geometry
    (ax, ay), h = cell_geometry(mesh, cell)
    u, v = rng.uniform(margin, 1.0 - margin, size=2)
    return np.array([ax + u * h, ay + v * h])
