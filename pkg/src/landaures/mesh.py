"""
Closed triangulated surfaces bounding the obstacle K.

Meshes of analytic shapes (spheres, ellipsoids) keep a flat parameter
triangulation of the unit sphere; panel quadrature nodes are lifted radially
onto the exact surface with the exact area element and normal. General
meshes are used as flat panels.

Mesh file format (ASCII): line 1 ``nv nt``, then nv lines ``x y z``, then nt
lines ``i j k`` with 0-based vertex indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray

from .exceptions import MeshValidityError, QuadratureError
from .models import MeshShape, ObstacleSpec
from .quadrature import (
    ball_rule,
    duffy_rule,
    subdivided_triangle_rule,
    tetrahedron_rule,
    unit_triangle_rule,
)
from .utils.integrity import canonical_json, compute_array_hash, compute_content_hash

logger = structlog.get_logger()

FloatArray = NDArray[np.float64]
PanelRule = Tuple[FloatArray, FloatArray, FloatArray]

_GEOMETRY_ORDER = 6


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """
    Triangulated closed surface with outward oriented panels.

    Attributes:
        vertices: (nv, 3) vertex coordinates on the surface.
        triangles: (nt, 3) vertex indices, counter-clockwise seen from outside.
        shape: Analytic shape tag; "general" means flat panels.
    """

    vertices: FloatArray
    triangles: NDArray[np.int64]
    shape: MeshShape = MeshShape()

    @property
    def n_panels(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def is_analytic(self) -> bool:
        return self.shape.kind != "general"

    @cached_property
    def _axes(self) -> FloatArray:
        return np.asarray(self.shape.semi_axes, dtype=np.float64)

    @cached_property
    def _center(self) -> FloatArray:
        return np.asarray(self.shape.center, dtype=np.float64)

    @cached_property
    def parameter_vertices(self) -> FloatArray:
        """Vertices of the flat triangulation the panel rules are built on."""
        if not self.is_analytic:
            return self.vertices
        flat: FloatArray = (self.vertices - self._center) / self._axes
        return flat

    @cached_property
    def _flat_frames(self) -> Tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        """(v0, e1, e2, unit normal) of each parameter triangle."""
        tri = self.parameter_vertices[self.triangles]
        v0 = tri[:, 0]
        e1 = tri[:, 1] - v0
        e2 = tri[:, 2] - v0
        cross = np.cross(e1, e2)
        norm = np.linalg.norm(cross, axis=-1)
        if np.any(norm <= 0):
            raise MeshValidityError("mesh contains degenerate triangles")
        return v0, e1, e2, cross / norm[:, None]

    @cached_property
    def flat_areas(self) -> FloatArray:
        tri = self.vertices[self.triangles]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=-1)  # type: ignore[no-any-return]

    @cached_property
    def diameters(self) -> FloatArray:
        """Longest edge of each panel."""
        tri = self.vertices[self.triangles]
        edges = tri - np.roll(tri, 1, axis=1)
        longest: FloatArray = np.max(np.linalg.norm(edges, axis=-1), axis=-1)
        return longest

    @property
    def max_diameter(self) -> float:
        return float(np.max(self.diameters))

    def lift(
        self, flat_points: FloatArray, flat_weights: FloatArray, panel: ArrayLike
    ) -> PanelRule:
        """
        Map quadrature nodes on parameter triangles onto the surface.

        Args:
            flat_points: (..., 3) nodes on the flat parameter triangles.
            flat_weights: (...) flat area weights.
            panel: panel index (or array of indices broadcastable with the
                leading axes) whose flat normal applies.

        Returns:
            (points, weights, normals) on the surface.
        """
        _, _, _, flat_normal = self._flat_frames
        n_flat = flat_normal[np.asarray(panel)]
        if n_flat.ndim == 2 and flat_points.ndim == 3:
            n_flat = n_flat[:, None, :]
        if not self.is_analytic:
            normals = np.broadcast_to(n_flat, flat_points.shape)
            return flat_points, flat_weights, normals
        norm_p = np.linalg.norm(flat_points, axis=-1)
        unit = flat_points / norm_p[..., None]
        projection = np.abs(np.sum(n_flat * flat_points, axis=-1)) / norm_p**3
        grad = unit / self._axes
        grad_norm = np.linalg.norm(grad, axis=-1)
        area_factor = float(np.prod(self._axes)) * grad_norm
        points = self._center + unit * self._axes
        weights = flat_weights * projection * area_factor
        return points, weights, grad / grad_norm[..., None]

    def panel_rule(self, n: int) -> PanelRule:
        """Collapsed Gauss rule of order n on every panel: arrays (nt, n*n, ...)."""
        st, w = unit_triangle_rule(n)
        v0, e1, e2, _ = self._flat_frames
        flat = (
            v0[:, None, :]
            + st[None, :, :1] * e1[:, None, :]
            + st[None, :, 1:] * e2[:, None, :]
        )
        flat_area = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=-1)
        flat_w = w[None, :] * 2.0 * flat_area[:, None]
        return self.lift(flat, flat_w, np.arange(self.n_panels))

    def subdivided_rule(self, panel: int, n: int, levels: int) -> PanelRule:
        tri = self.parameter_vertices[self.triangles[panel]]
        pts, w = subdivided_triangle_rule(tri, n, levels)
        return self.lift(pts, w, panel)

    def singular_rule(self, panel: int, n: int) -> PanelRule:
        """Duffy rule around the panel's collocation point."""
        tri = self.parameter_vertices[self.triangles[panel]]
        apex = tri.mean(axis=0)
        pts, w = duffy_rule(apex, tri, n)
        return self.lift(pts, w, panel)

    def to_surface(self, flat_points: FloatArray) -> FloatArray:
        if not self.is_analytic:
            return flat_points
        unit = flat_points / np.linalg.norm(flat_points, axis=-1)[..., None]
        return self._center + unit * self._axes  # type: ignore[no-any-return]

    def adaptive_rule(
        self,
        panel: int,
        target: ArrayLike,
        n: int,
        max_levels: int,
        factor: float = 1.5,
    ) -> PanelRule:
        """
        Graded rule on one panel for a target point near (but off) the surface.

        Children closer to the target than ``factor`` times their diameter are
        split further, down to ``max_levels`` subdivisions.
        """
        x = np.asarray(target, dtype=np.float64)
        leaves = []
        stack = [(self.parameter_vertices[self.triangles[panel]], 0)]
        while stack:
            tri, level = stack.pop()
            phys = self.to_surface(tri)
            edges = phys - np.roll(phys, 1, axis=0)
            diam = float(np.max(np.linalg.norm(edges, axis=-1)))
            middle = self.to_surface(tri.mean(axis=0))
            if level < max_levels and np.linalg.norm(x - middle) < factor * diam:
                m01 = 0.5 * (tri[0] + tri[1])
                m12 = 0.5 * (tri[1] + tri[2])
                m20 = 0.5 * (tri[2] + tri[0])
                for child in (
                    (tri[0], m01, m20),
                    (m01, tri[1], m12),
                    (m20, m12, tri[2]),
                    (m01, m12, m20),
                ):
                    stack.append((np.stack(child), level + 1))
            else:
                leaves.append(tri)
        rules = [subdivided_triangle_rule(t, n, 0) for t in leaves]
        pts = np.concatenate([r[0] for r in rules])
        w = np.concatenate([r[1] for r in rules])
        return self.lift(pts, w, panel)

    @cached_property
    def _geometry(self) -> Tuple[FloatArray, FloatArray, FloatArray]:
        v0, e1, e2, _ = self._flat_frames
        flat_centroids = v0 + (e1 + e2) / 3.0
        centroids, _, normals = self.lift(
            flat_centroids, np.ones(self.n_panels), np.arange(self.n_panels)
        )
        _, weights, _ = self.panel_rule(_GEOMETRY_ORDER)
        return centroids, weights.sum(axis=-1), normals

    @property
    def centroids(self) -> FloatArray:
        """Collocation points: flat centroids lifted onto the surface."""
        return self._geometry[0]

    @property
    def areas(self) -> FloatArray:
        return self._geometry[1]

    @property
    def normals(self) -> FloatArray:
        """Outward unit normals at the collocation points."""
        return self._geometry[2]

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def signed_volume(self) -> float:
        """Enclosed volume of the flat triangulation; positive when outward."""
        tri = self.vertices[self.triangles]
        return float(
            np.sum(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])))
            / 6.0
        )

    @property
    def axial_extent(self) -> Tuple[float, float]:
        """(min x3, max x3) of the obstacle."""
        if self.is_analytic:
            c = self.shape.center[2]
            a = self.shape.semi_axes[2]
            return c - a, c + a
        z = self.vertices[:, 2]
        return float(z.min()), float(z.max())

    def contains(self, points: ArrayLike) -> NDArray[np.bool_]:
        """Inside test; exact for analytic shapes, winding number otherwise."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.is_analytic:
            rel = (pts - self._center) / self._axes
            return np.sum(rel**2, axis=-1) < 1.0  # type: ignore[no-any-return]
        return np.abs(self.winding_number(pts)) > 0.5

    def winding_number(self, points: ArrayLike) -> FloatArray:
        """Total solid angle of the surface seen from each point, over 4 pi."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        tri = self.vertices[self.triangles]
        a = tri[None, :, 0] - pts[:, None]
        b = tri[None, :, 1] - pts[:, None]
        c = tri[None, :, 2] - pts[:, None]
        la = np.linalg.norm(a, axis=-1)
        lb = np.linalg.norm(b, axis=-1)
        lc = np.linalg.norm(c, axis=-1)
        num = np.einsum("pti,pti->pt", a, np.cross(b, c))
        den = (
            la * lb * lc
            + np.einsum("pti,pti->pt", a, b) * lc
            + np.einsum("pti,pti->pt", b, c) * la
            + np.einsum("pti,pti->pt", c, a) * lb
        )
        solid: FloatArray = np.sum(2.0 * np.arctan2(num, den), axis=-1)
        return solid / (4.0 * math.pi)

    def mesh_hash(self) -> str:
        shape_hash = compute_content_hash(canonical_json(self.shape.model_dump()))
        return compute_array_hash(
            self.vertices, self.triangles, np.frombuffer(shape_hash.encode(), np.uint8)
        )

    def as_flat(self) -> "SurfaceMesh":
        """Same triangulation with the analytic shape tag dropped."""
        return SurfaceMesh(self.vertices, self.triangles, MeshShape(kind="general"))


def validate_mesh(mesh: SurfaceMesh) -> None:
    """
    Check that the mesh is a closed orientable surface with outward panels.

    Raises:
        MeshValidityError: on open edges, non-manifold edges, inconsistent
            orientation, degenerate panels or inward orientation.
    """
    tri = mesh.triangles
    if tri.ndim != 2 or tri.shape[1] != 3 or tri.shape[0] < 4:
        raise MeshValidityError("triangles must be an (nt >= 4, 3) index array")
    if tri.min() < 0 or tri.max() >= len(mesh.vertices):
        raise MeshValidityError("triangle index out of range")
    if np.any(mesh.flat_areas <= 0):
        raise MeshValidityError("mesh contains zero-area panels")

    directed: Dict[Tuple[int, int], int] = {}
    for t in tri:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (int(a), int(b))
            if key in directed:
                raise MeshValidityError(
                    f"edge {key} appears twice with the same orientation"
                )
            directed[key] = 1
    for a, b in directed:
        if (b, a) not in directed:
            raise MeshValidityError(f"edge ({a}, {b}) is not shared by two panels")
    if mesh.signed_volume <= 0:
        raise MeshValidityError("panels are oriented inward (negative signed volume)")


def _icosahedron() -> Tuple[FloatArray, NDArray[np.int64]]:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )  # fmt: skip
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )  # fmt: skip
    return verts / np.linalg.norm(verts, axis=1)[:, None], faces


def _unit_icosphere(level: int) -> Tuple[FloatArray, NDArray[np.int64]]:
    verts, faces = _icosahedron()
    vlist = [v for v in verts]
    for _ in range(level):
        cache: Dict[Tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = vlist[i] + vlist[j]
                vlist.append(m / np.linalg.norm(m))
                cache[key] = len(vlist) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint(int(a), int(b))
            bc = midpoint(int(b), int(c))
            ca = midpoint(int(c), int(a))
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = np.asarray(new_faces, dtype=np.int64)
    return np.asarray(vlist), faces


def icosphere(
    level: int, radius: float = 1.0, center: ArrayLike = (0.0, 0.0, 0.0)
) -> SurfaceMesh:
    """Sphere mesh with 20 * 4**level panels."""
    return ellipsoid(level, (radius, radius, radius), center, kind="sphere")


def ellipsoid(
    level: int,
    semi_axes: ArrayLike,
    center: ArrayLike = (0.0, 0.0, 0.0),
    kind: str = "ellipsoid",
) -> SurfaceMesh:
    """Axis-aligned ellipsoid mesh obtained by scaling an icosphere."""
    if level < 0:
        raise MeshValidityError("refinement level must be nonnegative")
    axes = np.asarray(semi_axes, dtype=np.float64)
    if axes.shape != (3,) or np.any(axes <= 0):
        raise MeshValidityError("semi axes must be three positive numbers")
    c = np.asarray(center, dtype=np.float64)
    unit, faces = _unit_icosphere(level)
    shape = MeshShape(
        kind="sphere" if kind == "sphere" else "ellipsoid",
        center=(float(c[0]), float(c[1]), float(c[2])),
        semi_axes=(float(axes[0]), float(axes[1]), float(axes[2])),
    )
    mesh = SurfaceMesh(c + unit * axes, faces, shape)
    logger.debug("mesh_generated", kind=shape.kind, level=level, panels=mesh.n_panels)
    return mesh


def load_mesh(path: Union[str, Path]) -> SurfaceMesh:
    """Read and validate a general triangle-list mesh file."""
    p = Path(path)
    try:
        lines = [ln.split() for ln in p.read_text(encoding="utf-8").splitlines()]
    except OSError as e:
        raise MeshValidityError(f"cannot read mesh file {p}: {e}") from e
    lines = [ln for ln in lines if ln]
    try:
        nv, nt = int(lines[0][0]), int(lines[0][1])
        verts = np.array([[float(v) for v in ln[:3]] for ln in lines[1 : 1 + nv]])
        tris = np.array(
            [[int(i) for i in ln[:3]] for ln in lines[1 + nv : 1 + nv + nt]],
            dtype=np.int64,
        )
    except (IndexError, ValueError) as e:
        raise MeshValidityError(f"malformed mesh file {p}: {e}") from e
    if verts.shape != (nv, 3) or tris.shape != (nt, 3):
        raise MeshValidityError(
            f"mesh file {p} declares {nv} vertices and {nt} triangles "
            f"but contains {len(verts)} and {len(tris)}"
        )
    mesh = SurfaceMesh(verts, tris, MeshShape(kind="general"))
    validate_mesh(mesh)
    return mesh


def save_mesh(mesh: SurfaceMesh, path: Union[str, Path]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    rows = [f"{len(mesh.vertices)} {mesh.n_panels}"]
    rows.extend(f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices)
    rows.extend(f"{i} {j} {k}" for i, j, k in mesh.triangles)
    p.write_text("\n".join(rows) + "\n", encoding="utf-8")


def mesh_from_obstacle(spec: ObstacleSpec) -> SurfaceMesh:
    """Build (and validate) the mesh an obstacle descriptor asks for."""
    if spec.shape == "sphere":
        mesh = icosphere(spec.refinement, spec.radius, spec.center)
    elif spec.shape == "ellipsoid":
        axes = spec.radius * np.asarray(spec.semi_axes, dtype=np.float64)
        mesh = ellipsoid(spec.refinement, axes, spec.center)
    else:
        assert spec.mesh_path is not None
        mesh = load_mesh(spec.mesh_path)
    validate_mesh(mesh)
    return mesh


def volume_rule(
    mesh: SurfaceMesh, n: int = 6, n_radial: Optional[int] = None
) -> Tuple[FloatArray, FloatArray]:
    """
    Quadrature over the obstacle K.

    Analytic shapes use a spherical-coordinate rule; general meshes a fan of
    tetrahedra from the vertex centroid, which requires K to be star-shaped
    with respect to it.
    """
    if mesh.is_analytic:
        nr = n_radial or 2 * n + 4
        return ball_rule(
            mesh.shape.center, 1.0, nr, nr, 2 * nr, semi_axes=mesh.shape.semi_axes
        )
    c = mesh.vertices.mean(axis=0)
    tri = mesh.vertices[mesh.triangles]
    six_vol = np.einsum(
        "ij,ij->i", tri[:, 0] - c, np.cross(tri[:, 1] - c, tri[:, 2] - c)
    )
    if np.any(six_vol <= 0):
        raise QuadratureError(
            "obstacle is not star-shaped with respect to its vertex centroid"
        )
    rules = [tetrahedron_rule(np.vstack([c, t]), n) for t in tri]
    return np.concatenate([r[0] for r in rules]), np.concatenate([r[1] for r in rules])
