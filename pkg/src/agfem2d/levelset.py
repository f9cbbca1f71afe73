"""Implicit geometry: signed level-set functions (negative inside) composed
from primitives via min/max boolean operations."""
from __future__ import annotations

import numpy as np

__all__ = ["LevelSet", "Circle", "HalfPlane", "Box", "Union", "Intersection", "Complement",
           "level_set_from_spec", "level_set_to_spec"]


class LevelSet:
    """Signed implicit function; phi(x, y) < 0 inside the domain."""

    def __call__(self, x, y):
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class Circle(LevelSet):
    def __init__(self, center, radius: float):
        self.center = (float(center[0]), float(center[1]))
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")

    def __call__(self, x, y):
        return np.hypot(np.asarray(x) - self.center[0], np.asarray(y) - self.center[1]) - self.radius

    def spec(self):
        return {"circle": {"center": list(self.center), "radius": self.radius}}


class HalfPlane(LevelSet):
    """phi = n . x - offset; inside where n . x < offset."""

    def __init__(self, normal, offset: float):
        n = np.asarray(normal, float)
        nn = float(np.hypot(*n))
        if nn == 0.0:
            raise ValueError("half-plane normal must be nonzero")
        self.normal = (n[0] / nn, n[1] / nn)
        self.offset = float(offset) / nn

    def __call__(self, x, y):
        return self.normal[0] * np.asarray(x) + self.normal[1] * np.asarray(y) - self.offset

    def spec(self):
        return {"half_plane": {"normal": list(self.normal), "offset": self.offset}}


class Box(LevelSet):
    def __init__(self, lo, hi):
        self.lo = (float(lo[0]), float(lo[1]))
        self.hi = (float(hi[0]), float(hi[1]))
        if not (self.lo[0] < self.hi[0] and self.lo[1] < self.hi[1]):
            raise ValueError("box must have positive extent")

    def __call__(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return np.maximum.reduce([self.lo[0] - x, x - self.hi[0], self.lo[1] - y, y - self.hi[1]])

    def spec(self):
        return {"box": {"lo": list(self.lo), "hi": list(self.hi)}}


class Union(LevelSet):
    def __init__(self, *parts: LevelSet):
        if not parts:
            raise ValueError("union of nothing")
        self.parts = parts

    def __call__(self, x, y):
        return np.minimum.reduce([p(x, y) for p in self.parts])

    def spec(self):
        return {"union": [p.spec() for p in self.parts]}


class Intersection(LevelSet):
    def __init__(self, *parts: LevelSet):
        if not parts:
            raise ValueError("intersection of nothing")
        self.parts = parts

    def __call__(self, x, y):
        return np.maximum.reduce([p(x, y) for p in self.parts])

    def spec(self):
        return {"intersection": [p.spec() for p in self.parts]}


class Complement(LevelSet):
    def __init__(self, inner: LevelSet):
        self.inner = inner

    def __call__(self, x, y):
        return -self.inner(x, y)

    def spec(self):
        return {"complement": self.inner.spec()}


def level_set_from_spec(node: dict) -> LevelSet:
    """Build a level set from its declarative config form (primitive name +
    parameters, composed with union/intersection/complement)."""
    if not isinstance(node, dict) or len(node) != 1:
        raise ValueError(f"level-set node must be a single-key mapping, got {node!r}")
    (name, arg), = node.items()
    if name == "circle":
        return Circle(arg["center"], arg["radius"])
    if name == "half_plane":
        return HalfPlane(arg["normal"], arg["offset"])
    if name == "box":
        return Box(arg["lo"], arg["hi"])
    if name == "union":
        return Union(*[level_set_from_spec(n) for n in arg])
    if name == "intersection":
        return Intersection(*[level_set_from_spec(n) for n in arg])
    if name == "complement":
        return Complement(level_set_from_spec(arg))
    raise ValueError(f"unknown level-set primitive {name!r}")


def level_set_to_spec(ls: LevelSet) -> dict:
    return ls.spec()
