"""Bundle of the geometric and functional discretization built on one mesh."""
from __future__ import annotations

from dataclasses import dataclass

from .aggregation import AggregateMap, build_aggregates
from .cutgeom import CUT, intersect_domain
from .levelset import LevelSet
from .quadtree import QuadtreeMesh, collect_hanging_entities
from .spaces import (HistoryLayout, ScalarQ1Space, build_continuous_space,
                     build_history_space)


@dataclass
class Discretization:
    mesh: QuadtreeMesh
    levelset: LevelSet
    classes: dict
    cutgeo: dict
    aggregates: AggregateMap | None
    hanging: list
    space: ScalarQ1Space
    history: HistoryLayout

    @property
    def active_cells(self):
        return self.space.cells


def build_discretization(mesh: QuadtreeMesh, ls: LevelSet, history_flavor: str = "aggregated",
                         aggregate: bool = True, volume_degree: int = 4,
                         boundary_points: int = 3) -> Discretization:
    """Intersect, aggregate, and build both FE spaces on the given mesh."""
    classes, cutgeo = intersect_domain(mesh, ls, volume_degree, boundary_points)
    need_agg = aggregate or history_flavor == "aggregated"
    aggregates = build_aggregates(mesh, classes) if need_agg else None
    hanging = collect_hanging_entities(mesh)
    space = build_continuous_space(mesh, classes, aggregates, hanging, aggregate=aggregate)
    history = build_history_space(mesh, classes, aggregates, flavor=history_flavor)
    return Discretization(mesh=mesh, levelset=ls, classes=classes, cutgeo=cutgeo,
                          aggregates=aggregates, hanging=hanging, space=space,
                          history=history)
