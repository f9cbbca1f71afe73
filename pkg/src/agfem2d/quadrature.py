"""Quadrature rules: tensor Gauss on boxes, Dunavant-type rules on triangles,
Gauss rules on segments, and a generic integrator."""
from __future__ import annotations

import numpy as np

__all__ = [
    "gauss_1d",
    "tensor_gauss_box",
    "triangle_rule",
    "segment_rule",
    "Quadrature",
    "integrate",
]


class Quadrature:
    """Points (n, 2) in physical coordinates with positive weights (n,)."""

    def __init__(self, points: np.ndarray, weights: np.ndarray):
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(weights, dtype=float).ravel()
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points/weights length mismatch")
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")


def gauss_1d(npoints: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w


def tensor_gauss_box(anchor, size: float, npoints: int = 2) -> Quadrature:
    """Tensor-product Gauss rule on the square [anchor, anchor + size]^2."""
    x, w = gauss_1d(npoints)
    ax, ay = anchor
    pts = np.array([(ax + size * xi, ay + size * yi) for yi in x for xi in x])
    wts = np.array([size * size * wi * wj for wj in w for wi in w])
    return Quadrature(pts, wts)


# Degree-4 exact symmetric rule on the triangle, 6 points.
# Barycentric coordinates and weights (weights sum to 1).
_TRI4_BARY = [
    (0.108103018168070, 0.445948490915965, 0.445948490915965, 0.223381589678011),
    (0.445948490915965, 0.108103018168070, 0.445948490915965, 0.223381589678011),
    (0.445948490915965, 0.445948490915965, 0.108103018168070, 0.223381589678011),
    (0.816847572980459, 0.091576213509771, 0.091576213509771, 0.109951743655322),
    (0.091576213509771, 0.816847572980459, 0.091576213509771, 0.109951743655322),
    (0.091576213509771, 0.091576213509771, 0.816847572980459, 0.109951743655322),
]

# Degree-5 exact 7-point rule (centroid + two symmetric orbits).
_S15 = np.sqrt(15.0)
_B1 = (6.0 + _S15) / 21.0
_B2 = (6.0 - _S15) / 21.0
_W1 = (155.0 + _S15) / 1200.0
_W2 = (155.0 - _S15) / 1200.0
_TRI5_BARY = [
    (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 9.0 / 40.0),
    (1.0 - 2.0 * _B1, _B1, _B1, _W1),
    (_B1, 1.0 - 2.0 * _B1, _B1, _W1),
    (_B1, _B1, 1.0 - 2.0 * _B1, _W1),
    (1.0 - 2.0 * _B2, _B2, _B2, _W2),
    (_B2, 1.0 - 2.0 * _B2, _B2, _W2),
    (_B2, _B2, 1.0 - 2.0 * _B2, _W2),
]


def triangle_area(v0, v1, v2) -> float:
    return 0.5 * abs((v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1]))


def triangle_rule(v0, v1, v2, degree: int = 4) -> Quadrature:
    """Rule on a physical triangle, exact to the requested polynomial degree.

    Degrees up to 4 use the 6-point rule, degree 5 the 7-point rule; higher
    degrees fall back to uniform subdivision with the degree-5 base rule
    (h-refinement, not formal exactness).
    """
    v0 = np.asarray(v0, float)
    v1 = np.asarray(v1, float)
    v2 = np.asarray(v2, float)
    if degree <= 5:
        bary = _TRI4_BARY if degree <= 4 else _TRI5_BARY
        area = triangle_area(v0, v1, v2)
        pts = np.array([a * v0 + b * v1 + c * v2 for a, b, c, _ in bary])
        wts = np.array([w * area for *_, w in bary])
        return Quadrature(pts, wts)
    m01, m12, m20 = 0.5 * (v0 + v1), 0.5 * (v1 + v2), 0.5 * (v2 + v0)
    subs = [(v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)]
    parts = [triangle_rule(a, b, c, degree - 2) for a, b, c in subs]
    return Quadrature(np.vstack([p.points for p in parts]),
                      np.concatenate([p.weights for p in parts]))


def segment_rule(p0, p1, npoints: int = 3) -> Quadrature:
    """Gauss rule along the straight segment p0-p1; weights carry arc length."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    x, w = gauss_1d(npoints)
    length = float(np.hypot(*(p1 - p0)))
    pts = p0[None, :] + x[:, None] * (p1 - p0)[None, :]
    return Quadrature(pts, w * length)


def integrate(f, quadrature: Quadrature) -> float:
    """Sum of w_i * f(x_i); exact for polynomials up to the rule's degree."""
    vals = np.array([f(p) for p in quadrature.points], dtype=float)
    return float(np.dot(quadrature.weights, vals))
