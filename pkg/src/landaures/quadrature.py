"""
Quadrature rules: 1D Gauss rules, collapsed (Duffy) rules on triangles and
tetrahedra, and a spherical-coordinate rule for balls.

All rules return ``(points, weights)`` with points along the last axis.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial.laguerre import laggauss
from numpy.polynomial.legendre import leggauss
from numpy.typing import ArrayLike, NDArray

Rule = Tuple[NDArray[np.float64], NDArray[np.float64]]


@lru_cache(maxsize=64)
def _leggauss(n: int) -> Rule:
    nodes, weights = leggauss(n)
    return nodes, weights


@lru_cache(maxsize=16)
def _laggauss(n: int) -> Rule:
    nodes, weights = laggauss(n)
    return nodes, weights


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0) -> Rule:
    """n-point Gauss-Legendre rule on [a, b]."""
    nodes, weights = _leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (nodes + 1.0), half * weights


def gauss_laguerre(n: int) -> Rule:
    """n-point Gauss-Laguerre rule for the weight e^{-t} on [0, inf)."""
    return _laggauss(n)


def uniform_periodic(n: int, period: float = 2 * np.pi) -> Rule:
    """Trapezoidal rule for periodic integrands."""
    nodes = np.arange(n, dtype=np.float64) * (period / n)
    return nodes, np.full(n, period / n)


def unit_triangle_rule(n: int) -> Rule:
    """
    Collapsed Gauss rule on the reference triangle {s, t >= 0, s + t <= 1}.

    Returns barycentric-style coordinates (s, t) of shape (n*n, 2) and
    weights summing to 1/2.
    """
    x, wx = gauss_legendre(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(wx, wx, indexing="ij")
    s = u * (1.0 - v)
    t = u * v
    w = wu * wv * u
    return np.stack([s.ravel(), t.ravel()], axis=-1), w.ravel()


def triangle_rule(vertices: ArrayLike, n: int) -> Rule:
    """Collapsed Gauss rule mapped onto a flat triangle (any ambient dimension)."""
    v = np.asarray(vertices, dtype=np.float64)
    st, w = unit_triangle_rule(n)
    e1 = v[1] - v[0]
    e2 = v[2] - v[0]
    points = v[0] + st[:, :1] * e1 + st[:, 1:] * e2
    return points, w * 2.0 * _triangle_area(e1, e2)


def duffy_rule(apex: ArrayLike, vertices: ArrayLike, n: int) -> Rule:
    """
    Rule for integrands with a 1/|x - apex| singularity, apex inside a triangle.

    The triangle is split into three sub-triangles sharing the apex; on each
    the Duffy map y = apex + s (a + t (b - a)) puts a factor s in the
    Jacobian that cancels the singularity.
    """
    p = np.asarray(apex, dtype=np.float64)
    v = np.asarray(vertices, dtype=np.float64)
    x, wx = gauss_legendre(n)
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(wx, wx, indexing="ij")
    s = s.ravel()[:, None]
    t = t.ravel()[:, None]
    base_w = (ws * wt).ravel() * s[:, 0]
    points = []
    weights = []
    for a, b in ((v[0], v[1]), (v[1], v[2]), (v[2], v[0])):
        ea = a - p
        eb = b - a
        points.append(p + s * (ea + t * eb))
        weights.append(base_w * 2.0 * _triangle_area(ea, eb))
    return np.concatenate(points), np.concatenate(weights)


def subdivided_triangle_rule(vertices: ArrayLike, n: int, levels: int) -> Rule:
    """Collapsed Gauss rule on each of the 4**levels midpoint children."""
    tris = [np.asarray(vertices, dtype=np.float64)]
    for _ in range(levels):
        children = []
        for t in tris:
            m01 = 0.5 * (t[0] + t[1])
            m12 = 0.5 * (t[1] + t[2])
            m20 = 0.5 * (t[2] + t[0])
            children.extend(
                [
                    np.stack([t[0], m01, m20]),
                    np.stack([m01, t[1], m12]),
                    np.stack([m20, m12, t[2]]),
                    np.stack([m01, m12, m20]),
                ]
            )
        tris = children
    rules = [triangle_rule(t, n) for t in tris]
    return (
        np.concatenate([r[0] for r in rules]),
        np.concatenate([r[1] for r in rules]),
    )


def ball_rule(
    center: ArrayLike,
    radius: float,
    n_radial: int = 16,
    n_polar: int = 16,
    n_azimuth: int = 32,
    semi_axes: ArrayLike = (1.0, 1.0, 1.0),
) -> Rule:
    """
    Spherical-coordinate rule on a ball (or an ellipsoid when ``semi_axes``
    scale the unit ball): Gauss-Legendre in r and cos(theta), trapezoid in phi.
    """
    r, wr = gauss_legendre(n_radial, 0.0, 1.0)
    mu, wmu = gauss_legendre(n_polar, -1.0, 1.0)
    phi, wphi = uniform_periodic(n_azimuth)
    R, M, P = np.meshgrid(r, mu, phi, indexing="ij")
    WR, WM, WP = np.meshgrid(wr * r**2, wmu, wphi, indexing="ij")
    sin_t = np.sqrt(np.clip(1.0 - M**2, 0.0, None))
    unit = np.stack([R * sin_t * np.cos(P), R * sin_t * np.sin(P), R * M], axis=-1)
    axes = radius * np.asarray(semi_axes, dtype=np.float64)
    points = np.asarray(center, dtype=np.float64) + unit.reshape(-1, 3) * axes
    weights = (WR * WM * WP).ravel() * float(np.prod(axes))
    return points, weights


def tetrahedron_rule(vertices: ArrayLike, n: int) -> Rule:
    """Collapsed (Stroud conical) Gauss rule on a tetrahedron."""
    v = np.asarray(vertices, dtype=np.float64)
    x, wx = gauss_legendre(n)
    a, b, c = np.meshgrid(x, x, x, indexing="ij")
    wa, wb, wc = np.meshgrid(wx, wx, wx, indexing="ij")
    # unit cube -> unit simplex
    s1 = a
    s2 = a * b
    s3 = a * b * c
    jac = a**2 * b
    e = v[1:] - v[0]
    bary = np.stack([(s1 - s2).ravel(), (s2 - s3).ravel(), s3.ravel()], axis=-1)
    points = v[0] + bary @ e
    volume6 = abs(float(np.linalg.det(e)))
    weights = (wa * wb * wc * jac).ravel() * volume6
    return points, weights


def _triangle_area(e1: NDArray[np.float64], e2: NDArray[np.float64]) -> float:
    if e1.shape[-1] == 2:
        return 0.5 * abs(float(e1[0] * e2[1] - e1[1] * e2[0]))
    return 0.5 * float(np.linalg.norm(np.cross(e1, e2)))
