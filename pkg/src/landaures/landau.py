"""
Landau levels, the Landau projection kernels, the symmetric-gauge angular
basis of each level, planar Toeplitz operators p_q 1_U p_q and their
eigenvalue counting functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammaln

from .exceptions import DomainError, QuadratureError
from .models import (
    CountingFunction,
    DiskRegion,
    FieldConfig,
    GridRegion,
    PolygonRegion,
    Region,
)
from .quadrature import gauss_legendre, triangle_rule, uniform_periodic
from .specfun import laguerre, laguerre_derivative, reg_lower_gamma

logger = structlog.get_logger()

ComplexArray = NDArray[np.complex128]


def landau_level(q: int, field: FieldConfig) -> float:
    """Lambda_q = (2q + 1) b."""
    if q < 0:
        raise DomainError(f"Landau level index must be nonnegative, got {q}")
    return field.landau_level(q)


def projection_kernel(
    q: int, field: FieldConfig, x: ArrayLike, y: ArrayLike
) -> ComplexArray:
    """
    Integral kernel of the projection onto the q-th Landau level:
    (b/2pi) L_q(b|x-y|^2/2) exp(-b|x-y|^2/4 - i(b/2)(x-c)^(y-c)).
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    d2 = np.sum((xa[..., :2] - ya[..., :2]) ** 2, axis=-1)
    b = field.b
    lag = np.asarray(laguerre(q, 0.5 * b * d2))
    phase = np.exp(-0.5j * b * field.wedge(xa, ya))
    return (b / (2 * np.pi)) * lag * np.exp(-0.25 * b * d2) * phase


def _mode_constants(q: int, k: int) -> Tuple[int, int, float]:
    alpha = abs(k - q)
    p = min(q, k)
    log_norm = 0.5 * (gammaln(p + 1) - gammaln(p + alpha + 1))
    return alpha, p, float(log_norm)


def angular_mode(q: int, k: int, field: FieldConfig, x: ArrayLike) -> ComplexArray:
    """
    Orthonormal symmetric-gauge eigenfunction of the Landau Hamiltonian at
    Lambda_q with angular momentum k - q, evaluated at planar points x.
    """
    if k < 0:
        raise DomainError(f"angular index must be nonnegative, got {k}")
    alpha, p, log_norm = _mode_constants(q, k)
    rel = field.planar_offset(x)
    scale = math.sqrt(0.5 * field.b)
    zeta = scale * (rel[..., 0] + 1j * rel[..., 1])
    if k < q:
        zeta = np.conj(zeta)
    u = np.abs(zeta) ** 2
    radial = np.asarray(laguerre(p, u, float(alpha))) * np.exp(-0.5 * u)
    norm = math.sqrt(field.b / (2 * np.pi)) * math.exp(log_norm)
    return norm * zeta**alpha * radial  # type: ignore[no-any-return]


def angular_mode_gradient(
    q: int, k: int, field: FieldConfig, x: ArrayLike
) -> Tuple[ComplexArray, ComplexArray]:
    """Planar gradient (d/dx1, d/dx2) of ``angular_mode``."""
    alpha, p, log_norm = _mode_constants(q, k)
    rel = field.planar_offset(x)
    scale = math.sqrt(0.5 * field.b)
    zeta = scale * (rel[..., 0] + 1j * rel[..., 1])
    conj = k < q
    if conj:
        zeta = np.conj(zeta)
    u = np.abs(zeta) ** 2
    lag = np.asarray(laguerre(p, u, float(alpha)))
    dlag = np.asarray(laguerre_derivative(p, u, float(alpha)))
    gauss = np.exp(-0.5 * u)
    norm = math.sqrt(field.b / (2 * np.pi)) * math.exp(log_norm)

    # d/dx_j of zeta^alpha; zeta-bar picks up the conjugate direction in x2
    if alpha > 0:
        dpow = alpha * zeta ** (alpha - 1) * scale
    else:
        dpow = np.zeros_like(zeta)
    d1_pow = dpow
    d2_pow = (-1j if conj else 1j) * dpow
    radial_factor = (dlag - 0.5 * lag) * gauss
    power = zeta**alpha
    grads = []
    for j, dp in ((0, d1_pow), (1, d2_pow)):
        du = field.b * rel[..., j]
        grads.append(norm * (dp * lag * gauss + power * radial_factor * du))
    return grads[0], grads[1]


def angular_basis(
    q: int, field: FieldConfig, x: ArrayLike, n_modes: int
) -> ComplexArray:
    """Matrix of shape (n_points, n_modes) with columns phi_{q,k}, k < n_modes."""
    pts = np.asarray(x, dtype=np.float64).reshape(-1, np.shape(x)[-1])
    return np.stack([angular_mode(q, k, field, pts) for k in range(n_modes)], axis=-1)


@dataclass(frozen=True)
class ToeplitzOperator:
    """Compression p_q 1_U p_q written in the first n_modes angular modes."""

    q: int
    b: float
    region: Region
    matrix: ComplexArray
    n_modes: int

    def eigenvalues(self) -> NDArray[np.float64]:
        """Eigenvalues sorted descending."""
        vals = np.linalg.eigvalsh(self.matrix)
        return vals[::-1]  # type: ignore[no-any-return]

    def counting_function(self, description: str = "") -> CountingFunction:
        return CountingFunction.from_values(
            self.eigenvalues(), description or f"toeplitz q={self.q} b={self.b}"
        )


def region_rule(
    region: Region, n_radial: int = 96, n_angular: int = 128, n_triangle: int = 24
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Planar quadrature points and weights covering a region descriptor."""
    if isinstance(region, DiskRegion):
        rho, wrho = gauss_legendre(n_radial, 0.0, region.radius)
        theta, wtheta = uniform_periodic(n_angular)
        R, T = np.meshgrid(rho, theta, indexing="ij")
        W = np.outer(wrho * rho, wtheta)
        cx, cy = region.center
        pts = np.stack([cx + R * np.cos(T), cy + R * np.sin(T)], axis=-1)
        return pts.reshape(-1, 2), W.ravel()
    if isinstance(region, PolygonRegion):
        verts = np.asarray(region.vertices, dtype=np.float64)
        _check_convex(verts)
        pieces = [
            triangle_rule(np.stack([verts[0], verts[i], verts[i + 1]]), n_triangle)
            for i in range(1, len(verts) - 1)
        ]
        return (
            np.concatenate([p[0] for p in pieces]),
            np.concatenate([p[1] for p in pieces]),
        )
    if isinstance(region, GridRegion):
        mask = np.asarray(region.mask, dtype=bool)
        if mask.ndim != 2 or not mask.any():
            raise QuadratureError("grid region mask must be a nonempty 2D array")
        rows, cols = np.nonzero(mask)
        h = region.spacing
        pts = np.stack(
            [region.origin[0] + (cols + 0.5) * h, region.origin[1] + (rows + 0.5) * h],
            axis=-1,
        )
        return pts, np.full(len(rows), h * h)
    raise QuadratureError(f"unsupported region descriptor {region!r}")


def _check_convex(verts: NDArray[np.float64]) -> None:
    edges = np.roll(verts, -1, axis=0) - verts
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    if not (np.all(cross > 0) or np.all(cross < 0)):
        raise QuadratureError(
            "polygon region must be strictly convex to be fan-tessellated"
        )


def toeplitz_matrix(
    q: int,
    field: FieldConfig,
    region: Region,
    n_modes: int,
    *,
    n_radial: int = 96,
    n_angular: Optional[int] = None,
) -> ToeplitzOperator:
    """Assemble (j, k) -> int_U conj(phi_{q,j}) phi_{q,k} by quadrature."""
    if n_modes < 1:
        raise DomainError("n_modes must be at least 1")
    n_ang = n_angular or max(128, 4 * n_modes + 16)
    pts, w = region_rule(region, n_radial=n_radial, n_angular=n_ang)
    basis = angular_basis(q, field, pts, n_modes)
    matrix = basis.conj().T @ (w[:, None] * basis)
    matrix = 0.5 * (matrix + matrix.conj().T)
    logger.debug(
        "toeplitz_assembled", q=q, n_modes=n_modes, points=len(w), kind=region.kind
    )
    return ToeplitzOperator(
        q=q, b=field.b, region=region, matrix=matrix, n_modes=n_modes
    )


def disk_toeplitz_eigenvalues(
    q: int, field: FieldConfig, radius: float, n: int, n_radial: int = 200
) -> NDArray[np.float64]:
    """
    Diagonal of p_q 1_disk p_q for a disk centered at the gauge center, which
    are its eigenvalues. Closed form P(k+1, bR^2/2) for q = 0.
    """
    x = 0.5 * field.b * radius**2
    if q == 0:
        return np.array([reg_lower_gamma(k + 1, x) for k in range(n)], dtype=float)
    u, wu = gauss_legendre(n_radial, 0.0, x)
    out = np.empty(n)
    for k in range(n):
        alpha, p, log_norm = _mode_constants(q, k)
        lag = np.asarray(laguerre(p, u, float(alpha)))
        # |phi|^2 dA = (b/2pi)(p!/(p+alpha)!) u^alpha L^2 e^{-u} (2pi/b) du
        density = u**alpha * lag**2 * np.exp(-u)
        out[k] = math.exp(2 * log_norm) * float(np.sum(wu * density))
    return out


def counting_function(cf: CountingFunction, r: float) -> int:
    """n(r) = #{lambda >= r}."""
    if r <= 0:
        raise DomainError("counting threshold r must be positive")
    return sum(1 for lam in cf.eigenvalues if lam >= r)


def counting_law_ratio(cf: CountingFunction, r: float, refined: bool = False) -> float:
    """
    n(r) ln|ln r| / |ln r|, the normalized count of the Toeplitz counting law.

    With ``refined`` the denominator uses the next-order scale
    |ln r| / (ln|ln r| - ln ln|ln r|).
    """
    if not 0 < r < math.exp(-1):
        raise DomainError("counting_law_ratio requires 0 < r < 1/e")
    big_l = abs(math.log(r))
    scale = math.log(big_l)
    if refined:
        if scale <= 1.0:
            raise DomainError("refined counting law requires ln|ln r| > 1")
        scale -= math.log(scale)
    return counting_function(cf, r) * scale / big_l
