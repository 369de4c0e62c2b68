"""
Boundary operators on the obstacle surface.

Nystrom collocation at the panel collocation points with piecewise constant
densities:

    S[i, j] = int_{panel j} G0(x_i, y) dsigma(y)
    D[i, j] = int_{panel j} nu_y . (grad_y + i A(y)) G0(x_i, y) dsigma(y)

Far panels use a collapsed Gauss rule, near panels a subdivided one and the
self panel a Duffy rule centred at the collocation point, whose Jacobian
cancels the 1/|x - y| singularity. For S the closed-form principal part
exp(-i b/2 x^y) / (4 pi |x - y|) is subtracted on the self panel and
integrated on its own, finer Duffy rule; only the bounded remainder goes
through the Green quadrature.

Normals point out of the obstacle K. For this orientation the double-layer
potential has the limits (D + 1/2) phi from outside and (D - 1/2) phi from
inside, so the Dirichlet-to-Robin maps read

    interior (K):  S^{-1} (D + S gamma + 1/2)
    exterior (Omega): S^{-1} (D + S gamma - 1/2)
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .exceptions import SingularOperatorError, TooCloseToSurfaceError
from .green import (
    green_function,
    green_normal_derivative,
    near_diagonal_principal,
)
from .mesh import SurfaceMesh, validate_mesh
from .models import (
    ArtifactEntry,
    FieldConfig,
    JumpReport,
    MapDiagnostics,
    PanelQuadratureSpec,
    QuadratureSpec,
)
from .observability import AssemblyMetrics, record_solve
from .utils.artifacts import write_matrix

logger = structlog.get_logger()

ComplexArray = NDArray[np.complex128]
FloatArray = NDArray[np.float64]
Kernel = Callable[[FloatArray, FloatArray, FloatArray], ComplexArray]
Principal = Callable[[FloatArray, FloatArray], ComplexArray]

Side = Literal["interior", "exterior"]
LayerKind = Literal["single", "double"]

SINGULAR_TOLERANCE = 1e-10
_DEFAULT_PANELS = PanelQuadratureSpec()
_DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True, eq=False)
class BoundaryOperatorMatrix:
    """A dense boundary operator on the panels of ``mesh``."""

    kind: str
    matrix: ComplexArray
    mesh: SurfaceMesh
    field: FieldConfig
    gamma: Optional[FloatArray] = None
    diagnostics: Optional[MapDiagnostics] = None

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    def __matmul__(self, density: ArrayLike) -> ComplexArray:
        return self.matrix @ np.asarray(density)  # type: ignore[no-any-return]

    def hermiticity_defect(self) -> float:
        """max |W M - (W M)^*| with W the panel areas: the L2(Sigma) defect."""
        wm = self.mesh.areas[:, None] * self.matrix
        return float(np.max(np.abs(wm - wm.conj().T)))

    def header(self) -> Dict[str, object]:
        gamma = self.gamma if self.gamma is not None else np.zeros(1)
        return {
            "kind": self.kind,
            "b": self.field.b,
            "gauge_center": list(self.field.gauge_center),
            "gamma_min": float(np.min(gamma)),
            "gamma_max": float(np.max(gamma)),
            "gamma_mean": float(np.mean(gamma)),
            "mesh_sha256": self.mesh.mesh_hash(),
            "panels": self.mesh.n_panels,
        }


def export_operator(
    op: BoundaryOperatorMatrix, path: Union[str, Path]
) -> ArtifactEntry:
    """Write the matrix and its JSON header."""
    return write_matrix(op.matrix, path, op.header())


def _single_kernel(field: FieldConfig, quad: QuadratureSpec) -> Kernel:
    def kernel(x: FloatArray, y: FloatArray, normal: FloatArray) -> ComplexArray:
        return green_function(x, y, field, quad)

    return kernel


def _principal_part(field: FieldConfig) -> Principal:
    def principal(x: FloatArray, y: FloatArray) -> ComplexArray:
        return near_diagonal_principal(x, y, field)

    return principal


def _double_kernel(field: FieldConfig, quad: QuadratureSpec) -> Kernel:
    def kernel(x: FloatArray, y: FloatArray, normal: FloatArray) -> ComplexArray:
        return green_normal_derivative(x, y, normal, field, quad)

    return kernel


def _row_chunks(n_rows: int, row_cost: int, budget: int) -> List[slice]:
    size = max(1, budget // max(1, row_cost))
    return [slice(i, min(i + size, n_rows)) for i in range(0, n_rows, size)]


def _assemble(
    mesh: SurfaceMesh,
    kernel: Kernel,
    panels: PanelQuadratureSpec,
    threads: int,
    principal: Optional[Principal] = None,
) -> ComplexArray:
    nt = mesh.n_panels
    x = mesh.centroids
    pts, w, nrm = mesh.panel_rule(panels.far_order)
    out = np.empty((nt, nt), dtype=np.complex128)

    def far_rows(rows: slice) -> None:
        vals = kernel(x[rows, None, None, :], pts[None], nrm[None])
        out[rows] = np.sum(vals * w[None], axis=-1)

    chunks = _row_chunks(nt, nt * pts.shape[1], panels.chunk_pairs)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(far_rows, chunks))
    else:
        for rows in chunks:
            far_rows(rows)

    # near panels: subdivided rule, one panel at a time
    dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
    near = dist < panels.near_factor * mesh.diameters[None, :]
    np.fill_diagonal(near, False)
    for j in range(nt):
        rows = np.nonzero(near[:, j])[0]
        if rows.size == 0:
            continue
        p, wj, nj = mesh.subdivided_rule(j, panels.near_order, panels.near_levels)
        vals = kernel(x[rows, None, :], p[None], nj[None])
        out[rows, j] = vals @ wj

    # self panels: Duffy rule around the collocation point
    rules = [mesh.singular_rule(i, panels.self_order) for i in range(nt)]
    sp = np.stack([r[0] for r in rules])
    sw = np.stack([r[1] for r in rules])
    sn = np.stack([r[2] for r in rules])
    diag = np.sum(kernel(x[:, None, :], sp, sn) * sw, axis=-1)
    if principal is not None:
        diag -= np.sum(principal(x[:, None, :], sp) * sw, axis=-1)
        fine = [mesh.singular_rule(i, panels.principal_order) for i in range(nt)]
        fp = np.stack([r[0] for r in fine])
        fw = np.stack([r[1] for r in fine])
        diag += np.sum(principal(x[:, None, :], fp) * fw, axis=-1)
    out[np.arange(nt), np.arange(nt)] = diag
    return out


def assemble_single_layer(
    mesh: SurfaceMesh,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
    *,
    panels: Optional[PanelQuadratureSpec] = None,
    threads: int = 1,
) -> BoundaryOperatorMatrix:
    """
    Single-layer matrix S. The result is symmetrized in the panel inner
    product, W S -> (W S + (W S)^*)/2, which the exact operator satisfies.
    """
    validate_mesh(mesh)
    quad = quad or _DEFAULT_QUAD
    panels = panels or _DEFAULT_PANELS
    with AssemblyMetrics("single_layer") as m:
        raw = _assemble(
            mesh,
            _single_kernel(field, quad),
            panels,
            threads,
            principal=_principal_part(field),
        )
        areas = mesh.areas
        weighted = areas[:, None] * raw
        weighted = 0.5 * (weighted + weighted.conj().T)
        matrix = weighted / areas[:, None]
    logger.info(
        "single_layer_assembled", panels=mesh.n_panels, b=field.b, seconds=m.duration
    )
    return BoundaryOperatorMatrix("single_layer", matrix, mesh, field)


def assemble_double_layer(
    mesh: SurfaceMesh,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
    *,
    panels: Optional[PanelQuadratureSpec] = None,
    threads: int = 1,
) -> BoundaryOperatorMatrix:
    """Double-layer matrix D with the gauge-covariant normal derivative."""
    validate_mesh(mesh)
    quad = quad or _DEFAULT_QUAD
    panels = panels or _DEFAULT_PANELS
    with AssemblyMetrics("double_layer") as m:
        matrix = _assemble(mesh, _double_kernel(field, quad), panels, threads)
    logger.info(
        "double_layer_assembled", panels=mesh.n_panels, b=field.b, seconds=m.duration
    )
    return BoundaryOperatorMatrix("double_layer", matrix, mesh, field)


def _potential_matrix(
    mesh: SurfaceMesh,
    kind: LayerKind,
    points: FloatArray,
    field: FieldConfig,
    quad: QuadratureSpec,
    panels: PanelQuadratureSpec,
) -> ComplexArray:
    """(n_points, n_panels) matrix mapping panel densities to potential values."""
    kernel = (
        _single_kernel(field, quad) if kind == "single" else _double_kernel(field, quad)
    )
    pts, w, nrm = mesh.panel_rule(panels.potential_order)
    out = np.empty((len(points), mesh.n_panels), dtype=np.complex128)
    per_point = pts.shape[0] * pts.shape[1]
    for rows in _row_chunks(len(points), per_point, panels.chunk_pairs):
        vals = kernel(points[rows, None, None, :], pts[None], nrm[None])
        out[rows] = np.sum(vals * w[None], axis=-1)

    dist = np.linalg.norm(points[:, None, :] - mesh.centroids[None, :, :], axis=-1)
    near = np.argwhere(dist < panels.near_factor * mesh.diameters[None, :])
    for p_idx, j in near:
        yp, wj, nj = mesh.adaptive_rule(
            int(j), points[p_idx], panels.near_order, panels.max_adaptive_levels
        )
        out[p_idx, j] = kernel(points[p_idx][None, :], yp, nj) @ wj
    return out


def eval_layer_potential(
    mesh: SurfaceMesh,
    density: ArrayLike,
    kind: LayerKind,
    x: ArrayLike,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
    *,
    panels: Optional[PanelQuadratureSpec] = None,
) -> Union[complex, ComplexArray]:
    """
    Single- or double-layer potential of a panel density at off-surface points.

    Raises:
        TooCloseToSurfaceError: if a point is within half a panel diameter
            of a collocation point.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    dist = np.linalg.norm(pts[:, None, :] - mesh.centroids[None, :, :], axis=-1)
    min_dist = float(np.min(dist))
    if min_dist <= 0.5 * mesh.max_diameter:
        raise TooCloseToSurfaceError(
            f"point at distance {min_dist:.3e} from the surface; "
            f"need more than {0.5 * mesh.max_diameter:.3e}"
        )
    values = _near_surface_potential(mesh, density, kind, pts, field, quad, panels)
    if np.ndim(x) == 1:
        return complex(values[0])
    return values


def _near_surface_potential(
    mesh: SurfaceMesh,
    density: ArrayLike,
    kind: LayerKind,
    points: FloatArray,
    field: FieldConfig,
    quad: Optional[QuadratureSpec],
    panels: Optional[PanelQuadratureSpec],
) -> ComplexArray:
    phi = np.asarray(density, dtype=np.complex128)
    if not np.any(phi):
        return np.zeros(len(points), dtype=np.complex128)
    mat = _potential_matrix(
        mesh, kind, points, field, quad or _DEFAULT_QUAD, panels or _DEFAULT_PANELS
    )
    return mat @ phi  # type: ignore[no-any-return]


def jump_relation_check(
    mesh: SurfaceMesh,
    density: ArrayLike,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
    *,
    single: Optional[BoundaryOperatorMatrix] = None,
    double: Optional[BoundaryOperatorMatrix] = None,
    n_samples: int = 12,
    offset_factor: float = 0.1,
    panels: Optional[PanelQuadratureSpec] = None,
) -> JumpReport:
    """
    Compare one-sided limits of the layer potentials with the operator
    values at sampled panels.

    Limits are estimated from offsets h and h/2 along the normal
    (h = offset_factor * panel diameter) by linear extrapolation
    2 u(h/2) - u(h). Residuals are relative to max |phi|.
    """
    phi = np.asarray(density, dtype=np.complex128)
    scale = float(np.max(np.abs(phi))) if phi.size else 0.0
    if scale == 0.0:
        return JumpReport(
            offset=offset_factor,
            n_points=0,
            double_exterior_residual=0.0,
            double_interior_residual=0.0,
            single_continuity_residual=0.0,
        )
    quad = quad or _DEFAULT_QUAD
    single = single or assemble_single_layer(mesh, field, quad, panels=panels)
    double = double or assemble_double_layer(mesh, field, quad, panels=panels)
    idx = np.unique(np.linspace(0, mesh.n_panels - 1, n_samples).astype(int))
    x = mesh.centroids[idx]
    nu = mesh.normals[idx]
    h = (offset_factor * mesh.diameters[idx])[:, None]

    def limit(kind: LayerKind, sign: float) -> ComplexArray:
        far = _near_surface_potential(
            mesh, phi, kind, x + sign * h * nu, field, quad, panels
        )
        near = _near_surface_potential(
            mesh, phi, kind, x + sign * 0.5 * h * nu, field, quad, panels
        )
        return 2.0 * near - far  # type: ignore[no-any-return]

    d_phi = (double.matrix @ phi)[idx]
    s_phi = (single.matrix @ phi)[idx]
    ext = np.max(np.abs(limit("double", 1.0) - (d_phi + 0.5 * phi[idx])))
    inn = np.max(np.abs(limit("double", -1.0) - (d_phi - 0.5 * phi[idx])))
    s_out = np.max(np.abs(limit("single", 1.0) - s_phi))
    s_in = np.max(np.abs(limit("single", -1.0) - s_phi))
    report = JumpReport(
        offset=offset_factor,
        n_points=int(idx.size),
        double_exterior_residual=float(ext) / scale,
        double_interior_residual=float(inn) / scale,
        single_continuity_residual=float(max(s_out, s_in)) / scale,
    )
    logger.info("jump_relation_checked", **report.model_dump())
    return report


def _jump_sign(side: Side) -> float:
    return 0.5 if side == "interior" else -0.5


def _gamma_vector(gamma: Union[float, ArrayLike], n: int) -> FloatArray:
    g = np.asarray(gamma, dtype=np.float64)
    if g.ndim == 0:
        return np.full(n, float(g))
    if g.shape != (n,):
        raise ValueError(f"gamma must be a scalar or have one value per panel ({n})")
    if not np.all(np.isfinite(g)):
        raise ValueError("gamma must be finite")
    return g


def _diagnose(matrix: ComplexArray, operator: str) -> MapDiagnostics:
    sv = linalg.svdvals(matrix)
    record_solve("svd")
    smax = float(sv[0])
    smin = float(sv[-1])
    cond = smax / smin if smin > 0 else math.inf
    rel = smin / smax if smax > 0 else 0.0
    diag = MapDiagnostics(
        kind=operator, condition_number=cond, smallest_singular_value=rel
    )
    if rel < SINGULAR_TOLERANCE:
        logger.warning("operator_singular", operator=operator, condition_number=cond)
        raise SingularOperatorError(
            operator=operator, condition_number=cond, smallest_singular_value=rel
        )
    if cond > 1e8:
        logger.warning(
            "operator_ill_conditioned", operator=operator, condition_number=cond
        )
    return diag


def dirichlet_robin_map(
    S: BoundaryOperatorMatrix,
    D: BoundaryOperatorMatrix,
    gamma: Union[float, ArrayLike],
    side: Side,
) -> BoundaryOperatorMatrix:
    """
    Dirichlet-to-Robin map S^{-1}(D + S gamma +- 1/2), computed as
    S^{-1}(D +- 1/2) + gamma so that the gamma shift is exact.

    Raises:
        SingularOperatorError: if S is numerically singular.
    """
    n = S.n
    g = _gamma_vector(gamma, n)
    diag = _diagnose(S.matrix, "single_layer")
    rhs = D.matrix + _jump_sign(side) * np.eye(n)
    lu = linalg.lu_factor(S.matrix)
    record_solve("lu")
    matrix = linalg.lu_solve(lu, rhs) + np.diag(g)
    return BoundaryOperatorMatrix(
        f"dirichlet_robin_{side}", matrix, S.mesh, S.field, g, diag
    )


def robin_dirichlet_map(
    S: BoundaryOperatorMatrix,
    D: BoundaryOperatorMatrix,
    gamma: Union[float, ArrayLike],
    side: Side,
) -> BoundaryOperatorMatrix:
    """
    Robin-to-Dirichlet map (D + S gamma +- 1/2)^{-1} S.

    Raises:
        SingularOperatorError: when the smallest singular value of
            D + S gamma +- 1/2 is below 1e-10 of its norm.
    """
    n = S.n
    g = _gamma_vector(gamma, n)
    half = _jump_sign(side) * np.eye(n)
    system = D.matrix + S.matrix * g[None, :] + half
    diag = _diagnose(system, f"robin_system_{side}")
    lu = linalg.lu_factor(system)
    record_solve("lu")
    matrix = linalg.lu_solve(lu, S.matrix)
    return BoundaryOperatorMatrix(
        f"robin_dirichlet_{side}", matrix, S.mesh, S.field, g, diag
    )


@dataclass
class BoundaryMaps:
    """
    S, D and the Robin parameter of one obstacle, with cached maps.
    """

    single: BoundaryOperatorMatrix
    double: BoundaryOperatorMatrix
    gamma: FloatArray
    _cache: Dict[Tuple[str, str], BoundaryOperatorMatrix] = dataclass_field(
        default_factory=dict, repr=False
    )

    @classmethod
    def build(
        cls,
        mesh: SurfaceMesh,
        field: FieldConfig,
        gamma: Union[float, ArrayLike] = 0.0,
        quad: Optional[QuadratureSpec] = None,
        *,
        panels: Optional[PanelQuadratureSpec] = None,
        threads: int = 1,
    ) -> "BoundaryMaps":
        started = time.perf_counter()
        single = assemble_single_layer(
            mesh, field, quad, panels=panels, threads=threads
        )
        double = assemble_double_layer(
            mesh, field, quad, panels=panels, threads=threads
        )
        logger.debug(
            "boundary_maps_built",
            panels=mesh.n_panels,
            seconds=time.perf_counter() - started,
        )
        return cls(single, double, _gamma_vector(gamma, mesh.n_panels))

    @property
    def mesh(self) -> SurfaceMesh:
        return self.single.mesh

    def dirichlet_robin(self, side: Side) -> BoundaryOperatorMatrix:
        key = ("dr", side)
        if key not in self._cache:
            self._cache[key] = dirichlet_robin_map(
                self.single, self.double, self.gamma, side
            )
        return self._cache[key]

    def robin_dirichlet(self, side: Side) -> BoundaryOperatorMatrix:
        key = ("rd", side)
        if key not in self._cache:
            self._cache[key] = robin_dirichlet_map(
                self.single, self.double, self.gamma, side
            )
        return self._cache[key]

    def robin_difference(self) -> ComplexArray:
        """RD_K - RD_Omega."""
        return (  # type: ignore[no-any-return]
            self.robin_dirichlet("interior").matrix
            - self.robin_dirichlet("exterior").matrix
        )

    def diagnostics(self) -> List[MapDiagnostics]:
        return [op.diagnostics for op in self._cache.values() if op.diagnostics]
