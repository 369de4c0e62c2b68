"""
Characteristic values of holomorphic matrix families.

A characteristic value of a family A(z) is a point z != 0 where I - A(z)/z is
not invertible. Detection is by the smallest singular value on a polar grid,
followed by Newton refinement on the smallest singular triple; multiplicities
come from the contour trace integral

    (1 / 2 pi i) tr \\oint M'(z) M(z)^{-1} dz,    M(z) = I - A(z)/z.

Birman-Schwinger families are parametrized by z = eps * ik, so the values
map back to the momentum k = -i eps z.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import (
    Callable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from scipy import linalg
from scipy.stats import unitary_group

from .bs import PerturbationForm, TrialSpace, assemble_a_q
from .exceptions import DomainError, IllConditionedContourError
from .models import (
    AdditivityReport,
    ArtifactEntry,
    CharacteristicValue,
    CountingFunction,
    CountingTransferReport,
    CountingTransferRow,
    SectorReport,
    SectorSpec,
)
from .observability import record_solve
from .quadrature import gauss_legendre
from .utils.artifacts import write_csv

logger = structlog.get_logger()

ComplexArray = NDArray[np.complex128]
Evaluator = Callable[[complex], ComplexArray]

CONTOUR_GUARD = 1e-8
INTEGER_TOLERANCE = 1e-6
DEFAULT_CONTOUR_NODES = 64
MAX_CONTOUR_NODES = 1024
FD_STEP = 1e-4

CHARVAL_COLUMNS = (
    "re_k",
    "im_k",
    "sigma_min",
    "multiplicity",
    "contour_radius",
    "integer_defect",
)


@dataclass(frozen=True)
class Annulus:
    """The open annulus r_inner < |z| < r_outer."""

    r_inner: float
    r_outer: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.r_inner < self.r_outer:
            raise DomainError("annulus radii must satisfy 0 <= r_inner < r_outer")

    def contains(self, z: complex) -> bool:
        return self.r_inner < abs(z) < self.r_outer


@dataclass(frozen=True, eq=False)
class HolomorphicFamily:
    """
    A square matrix family A(z) holomorphic on ``domain``. ``derivative``
    is optional; without it A'(z) is taken by fourth-order central
    differences.
    """

    evaluator: Evaluator
    domain: Annulus
    label: str = ""
    derivative: Optional[Evaluator] = None

    def __call__(self, z: complex) -> ComplexArray:
        return np.asarray(self.evaluator(complex(z)), dtype=np.complex128)

    @property
    def dimension(self) -> int:
        midpoint = 0.5 * (self.domain.r_inner + self.domain.r_outer)
        return int(self(midpoint).shape[0])

    def derivative_at(self, z: complex, h: Optional[float] = None) -> ComplexArray:
        if self.derivative is not None:
            return np.asarray(self.derivative(complex(z)), dtype=np.complex128)
        step = h if h is not None else FD_STEP * abs(z)
        f = self
        return (  # type: ignore[no-any-return]
            -f(z + 2 * step) + 8 * f(z + step) - 8 * f(z - step) + f(z - 2 * step)
        ) / (12 * step)

    def system(self, z: complex) -> ComplexArray:
        """I - A(z)/z."""
        A = self(z)
        return np.eye(A.shape[0]) - A / z  # type: ignore[no-any-return]

    def system_derivative(self, z: complex) -> ComplexArray:
        """d/dz (I - A(z)/z) = -A'(z)/z + A(z)/z^2."""
        dA: ComplexArray = -self.derivative_at(z) / z + self(z) / z**2
        return dA

    def sigma_min(self, z: complex) -> float:
        if z == 0:
            return 0.0
        return float(linalg.svdvals(self.system(z))[-1])


@dataclass(frozen=True)
class PolarGrid:
    """
    Polar sampling grid over an annulus, optionally restricted to an angular
    window. Radii are geometrically spaced unless ``spacing="linear"``.
    """

    r_inner: float
    r_outer: float
    n_radial: int = 32
    n_angular: int = 48
    theta_range: Tuple[float, float] = (0.0, 2.0 * math.pi)
    spacing: str = "geometric"

    def __post_init__(self) -> None:
        if not 0.0 < self.r_inner < self.r_outer:
            raise DomainError("grid radii must satisfy 0 < r_inner < r_outer")
        if self.n_radial < 2 or self.n_angular < 3:
            raise DomainError("grid needs at least 2 radii and 3 angles")

    @property
    def periodic(self) -> bool:
        lo, hi = self.theta_range
        return math.isclose(hi - lo, 2.0 * math.pi)

    @property
    def radii(self) -> NDArray[np.float64]:
        if self.spacing == "linear":
            return np.linspace(self.r_inner, self.r_outer, self.n_radial)
        return np.geomspace(self.r_inner, self.r_outer, self.n_radial)

    @property
    def angles(self) -> NDArray[np.float64]:
        lo, hi = self.theta_range
        return np.linspace(lo, hi, self.n_angular, endpoint=not self.periodic)

    @property
    def annulus(self) -> Annulus:
        return Annulus(self.r_inner, self.r_outer)

    def points(self) -> ComplexArray:
        """Grid nodes, shape (n_radial, n_angular)."""
        nodes: ComplexArray = self.radii[:, None] * np.exp(1j * self.angles)[None, :]
        return nodes

    def cell_size(self, r: float) -> float:
        radii = self.radii
        dr = float(np.max(np.diff(radii))) if self.spacing == "linear" else (
            r * (radii[1] / radii[0] - 1.0)
        )
        dtheta = float(self.angles[1] - self.angles[0])
        return max(dr, r * dtheta)


class ContourCount(NamedTuple):
    count: int
    value: complex
    integer_defect: float
    n_quad: int
    sigma_min: float


def to_momentum(z: complex, eps_sign: int) -> complex:
    """k = -i eps z."""
    return -1j * eps_sign * complex(z)


def _sigma_grid(
    family: HolomorphicFamily, points: ComplexArray, threads: int
) -> NDArray[np.float64]:
    flat = list(points.ravel())
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(family.sigma_min, flat))
    else:
        values = [family.sigma_min(z) for z in flat]
    return np.asarray(values).reshape(points.shape)


def _grid_minima(sigma: NDArray[np.float64], periodic: bool) -> List[Tuple[int, int]]:
    n_r, n_t = sigma.shape
    minima = []
    for i in range(n_r):
        for j in range(n_t):
            v = sigma[i, j]
            neighbours = []
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    ii, jj = i + di, j + dj
                    if periodic:
                        jj %= n_t
                    if 0 <= ii < n_r and 0 <= jj < n_t:
                        neighbours.append(sigma[ii, jj])
            if all(v <= w for w in neighbours):
                minima.append((i, j))
    return minima


def refine(
    family: HolomorphicFamily,
    z0: complex,
    *,
    max_iter: int = 50,
    tolerance: float = 1e-13,
) -> Tuple[complex, float]:
    """
    Newton iteration on the smallest singular triple (sigma, u, v) of
    M(z) = I - A(z)/z: z <- z - sigma / (u^H M'(z) v).

    Returns the refined point and sigma_min there. Stops early when the
    iterate leaves the family's domain.
    """
    z = complex(z0)
    sigma = family.sigma_min(z)
    for _ in range(max_iter):
        U, s, Vh = linalg.svd(family.system(z))
        sigma = float(s[-1])
        if sigma == 0.0:
            break
        u, v = U[:, -1], Vh[-1].conj()
        slope = complex(u.conj() @ family.system_derivative(z) @ v)
        if slope == 0 or not np.isfinite(slope):
            break
        step = sigma / slope
        z_next = z - step
        if not family.domain.contains(z_next):
            break
        z = z_next
        if abs(step) <= tolerance * abs(z):
            sigma = family.sigma_min(z)
            break
    else:
        sigma = family.sigma_min(z)
    return z, sigma


def scan_characteristic_values(
    family: HolomorphicFamily,
    grid: PolarGrid,
    threshold: float = 1e-2,
    *,
    threads: int = 1,
) -> List[complex]:
    """
    Local minimizers of sigma_min(I - A(z)/z) over the grid, refined by
    Newton iteration and kept when the refined residual is below
    ``threshold``. Candidates that refine to the same point are merged.
    """
    points = grid.points()
    sigma = _sigma_grid(family, points, threads)
    record_solve("svd")
    found: List[Tuple[complex, float]] = []
    for i, j in _grid_minima(sigma, grid.periodic):
        z, res = refine(family, points[i, j])
        if res >= threshold or not grid.annulus.contains(z):
            continue
        merge = 1e-6 * max(abs(z), grid.r_inner)
        if any(abs(z - w) <= merge for w, _ in found):
            continue
        found.append((z, res))
    found.sort(key=lambda item: (abs(item[0]), math.atan2(item[0].imag, item[0].real)))
    logger.info(
        "charval_scan",
        family=family.label,
        grid_points=int(points.size),
        candidates=len(found),
    )
    return [z for z, _ in found]


def circle_contour(
    center: complex, radius: float, n: int
) -> Tuple[ComplexArray, ComplexArray]:
    """Trapezoid nodes on a circle and the weights dz / (2 pi i)."""
    theta = 2 * np.pi * np.arange(n) / n
    unit = np.exp(1j * theta)
    nodes = center + radius * unit
    return nodes, radius * unit / n  # type: ignore[return-value]


def rectangle_contour(
    lower_left: complex, upper_right: complex, n_per_edge: int
) -> Tuple[ComplexArray, ComplexArray]:
    """Counter-clockwise rectangle with Gauss-Legendre nodes on each edge."""
    a, c = complex(lower_left), complex(upper_right)
    corners = [a, complex(c.real, a.imag), c, complex(a.real, c.imag), a]
    t, w = gauss_legendre(n_per_edge)
    nodes, weights = [], []
    for p, q in zip(corners[:-1], corners[1:]):
        nodes.append(p + (q - p) * t)
        weights.append((q - p) * w / (2j * np.pi))
    return np.concatenate(nodes), np.concatenate(weights)


def contour_trace(
    family: HolomorphicFamily, nodes: ComplexArray, weights: ComplexArray
) -> Tuple[complex, float]:
    """
    Quadrature of (1/2 pi i) tr \\oint M' M^{-1} dz on the given contour.

    Raises:
        IllConditionedContourError: sigma_min on the contour below 1e-8.
    """
    total = 0.0 + 0.0j
    smallest = math.inf
    for z, w in zip(nodes, weights):
        M = family.system(z)
        s = float(linalg.svdvals(M)[-1])
        smallest = min(smallest, s)
        if s < CONTOUR_GUARD:
            raise IllConditionedContourError(sigma_min=s, threshold=CONTOUR_GUARD)
        total += w * np.trace(linalg.solve(M, family.system_derivative(z)))
    record_solve("contour")
    return complex(total), smallest


def _as_count(value: complex, n_quad: int, sigma: float) -> ContourCount:
    count = int(round(value.real))
    defect = abs(value - count)
    return ContourCount(count, value, float(defect), n_quad, sigma)


def multiplicity(
    family: HolomorphicFamily,
    center: complex,
    radius: float,
    n_quad: int = DEFAULT_CONTOUR_NODES,
    *,
    max_nodes: int = MAX_CONTOUR_NODES,
) -> ContourCount:
    """
    Number of characteristic values (with multiplicity) inside the circle.
    The node count is doubled until the integer defect stops changing.

    Raises:
        DomainError: the circle encloses z = 0, where I - A(z)/z has a pole.
        IllConditionedContourError: the circle passes through a value.
    """
    if abs(center) <= radius:
        raise DomainError("contour must not enclose z = 0")
    n = n_quad
    value, sigma = contour_trace(family, *circle_contour(center, radius, n))
    while n < max_nodes:
        n *= 2
        finer, sigma = contour_trace(family, *circle_contour(center, radius, n))
        change = abs(finer - value)
        value = finer
        if change < 0.1 * INTEGER_TOLERANCE:
            break
    result = _as_count(value, n, sigma)
    if result.integer_defect > INTEGER_TOLERANCE:
        logger.warning(
            "contour_integer_defect",
            center=str(complex(center)),
            radius=radius,
            defect=result.integer_defect,
        )
    return result


def characteristic_values(
    family: HolomorphicFamily,
    grid: PolarGrid,
    threshold: float = 1e-2,
    *,
    n_quad: int = DEFAULT_CONTOUR_NODES,
    threads: int = 1,
) -> List[CharacteristicValue]:
    """Scan, refine and count every characteristic value in the grid."""
    located = scan_characteristic_values(family, grid, threshold, threads=threads)
    out: List[CharacteristicValue] = []
    for i, z in enumerate(located):
        others = [abs(z - w) for j, w in enumerate(located) if j != i]
        radius = 0.5 * min([abs(z), grid.cell_size(abs(z))] + others)
        count: Optional[ContourCount] = None
        for _ in range(4):
            try:
                count = multiplicity(family, z, radius, n_quad)
                break
            except IllConditionedContourError:
                radius *= 0.5
        if count is None or count.count < 1:
            logger.warning("charval_dropped", location=str(z), radius=radius)
            continue
        out.append(
            CharacteristicValue(
                re=z.real,
                im=z.imag,
                multiplicity=count.count,
                residual=family.sigma_min(z),
                contour_radius=radius,
                integer_defect=count.integer_defect,
            )
        )
    return out


def additivity_check(
    family: HolomorphicFamily,
    lower_left: complex,
    upper_right: complex,
    *,
    splits: Tuple[int, int] = (2, 1),
    n_per_edge: int = 48,
) -> AdditivityReport:
    """
    Count over a rectangle against the sum over an nx x ny tiling of it.
    Tiling lines must stay clear of the characteristic values.
    """
    a, c = complex(lower_left), complex(upper_right)
    total, _ = contour_trace(family, *rectangle_contour(a, c, n_per_edge))
    nx, ny = splits
    dx = (c.real - a.real) / nx
    dy = (c.imag - a.imag) / ny
    parts: List[ContourCount] = []
    for i in range(nx):
        for j in range(ny):
            ll = complex(a.real + i * dx, a.imag + j * dy)
            ur = ll + complex(dx, dy)
            value, sigma = contour_trace(family, *rectangle_contour(ll, ur, n_per_edge))
            parts.append(_as_count(value, 4 * n_per_edge, sigma))
    whole = _as_count(total, 4 * n_per_edge, 0.0)
    defect = max([whole.integer_defect] + [p.integer_defect for p in parts])
    return AdditivityReport(
        total=whole.count,
        parts=[p.count for p in parts],
        max_integer_defect=defect,
        passed=whole.count == sum(p.count for p in parts)
        and defect < INTEGER_TOLERANCE,
    )


def _locations(values: Sequence[Union[CharacteristicValue, complex]]) -> List[complex]:
    return [
        v.location if isinstance(v, CharacteristicValue) else complex(v)
        for v in values
    ]


def sector_check(
    values: Sequence[Union[CharacteristicValue, complex]],
    sector: SectorSpec,
    r_inner: float,
    r_outer: float,
    *,
    tolerance: float = 1e-6,
) -> SectorReport:
    """
    Localization of momenta k in the sector of half-angle theta around the
    negative (Dirichlet) or positive (Robin) imaginary axis.

    Passes when every value in the inner half of the annulus lies in the
    sector. ``sign_fraction`` is the fraction on the expected side of the
    real axis (Im k <= tol, resp. Im k >= -tol).
    """
    pts = [k for k in _locations(values) if r_inner < abs(k) < r_outer]
    if not pts:
        return SectorReport(
            n_values=0,
            inside_fraction=1.0,
            sign_fraction=1.0,
            inner_half_fraction=1.0,
            max_offaxis_ratio=0.0,
            passed=True,
        )
    side = -1.0 if sector.orientation == "negative_imaginary" else 1.0
    slope = math.tan(sector.half_angle)
    signed = [side * k.imag >= -tolerance for k in pts]
    inside = [s and abs(k.real) <= slope * abs(k) for s, k in zip(signed, pts)]
    middle = math.sqrt(r_inner * r_outer) if r_inner > 0 else 0.5 * r_outer
    inner = [ok for ok, k in zip(inside, pts) if abs(k) <= middle]
    inner_fraction = sum(inner) / len(inner) if inner else 1.0
    report = SectorReport(
        n_values=len(pts),
        inside_fraction=sum(inside) / len(pts),
        sign_fraction=sum(signed) / len(pts),
        inner_half_fraction=inner_fraction,
        max_offaxis_ratio=max(abs(k.real) / abs(k) for k in pts),
        passed=inner_fraction == 1.0,
    )
    logger.info("sector_check", **report.model_dump())
    return report


def counting_transfer_check(
    family: HolomorphicFamily,
    a0_eigs: CountingFunction,
    grid: PolarGrid,
    *,
    radii: Optional[Sequence[float]] = None,
    values: Optional[Sequence[CharacteristicValue]] = None,
    threshold: float = 1e-2,
    allowed_difference: int = 2,
) -> CountingTransferReport:
    """
    #{characteristic values with r <= |z| < r_outer} (with multiplicity)
    against #{eigenvalues of A(0) in [r, r_outer)} over a grid of r.
    """
    if values is None:
        values = characteristic_values(family, grid, threshold)
    r0 = grid.r_outer
    rs = (
        list(radii)
        if radii is not None
        else list(np.geomspace(grid.r_inner, r0, 8, endpoint=False))
    )
    eigs = np.asarray(a0_eigs.eigenvalues)
    rows = []
    for r in rs:
        n_values = sum(v.multiplicity for v in values if r <= abs(v.location) < r0)
        n_a0 = int(np.count_nonzero((eigs >= r) & (eigs < r0)))
        rows.append(CountingTransferRow(r=float(r), n_values=n_values, n_a0=n_a0))
    worst = max((abs(row.difference) for row in rows), default=0)
    return CountingTransferReport(
        rows=rows,
        max_abs_difference=worst,
        allowed_difference=allowed_difference,
        passed=worst <= allowed_difference,
    )


def synthetic_family(
    a0_spectrum: ArrayLike,
    perturbation_scale: float,
    seed: int,
    *,
    domain: Optional[Annulus] = None,
) -> HolomorphicFamily:
    """
    A(z) = A0 + z A1 + z^2 A2 with A0 = U diag(spectrum) U^H for a seeded
    Haar unitary U and spectral norms of A1, A2 equal to the scale.

    A1 and A2 are graded by sqrt(|spectrum|) in the eigenbasis of A0, so
    their diagonal entries decay along the spectrum like those of a compact
    perturbation.
    """
    spectrum = np.asarray(a0_spectrum, dtype=np.float64)
    if spectrum.ndim != 1 or spectrum.size == 0:
        raise DomainError("spectrum must be a non-empty real vector")
    if perturbation_scale < 0:
        raise DomainError("perturbation scale must be nonnegative")
    n = spectrum.size
    rng = np.random.default_rng(seed)
    U = unitary_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
    A0 = (U * spectrum[None, :]) @ U.conj().T

    def _scaled(M: ComplexArray) -> ComplexArray:
        norm = float(np.linalg.norm(M, 2))
        return M * (perturbation_scale / norm) if norm > 0 else M

    top = float(np.max(np.abs(spectrum)))
    grade = np.sqrt(np.abs(spectrum) / top) if top > 0 else np.ones(n)

    def _graded() -> ComplexArray:
        R = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        return _scaled(U @ (grade[:, None] * R * grade[None, :]) @ U.conj().T)

    A1 = _graded()
    A2 = _graded()
    if domain is None:
        domain = Annulus(0.0, 4.0 * top if top > 0 else 1.0)
    return HolomorphicFamily(
        evaluator=lambda z: A0 + z * A1 + z * z * A2,
        domain=domain,
        label=f"synthetic(n={n}, scale={perturbation_scale:g}, seed={seed})",
        derivative=lambda z: A1 + 2 * z * A2,
    )


def birman_schwinger_family(
    form: PerturbationForm,
    q: int,
    trial: TrialSpace,
    *,
    j_max: Optional[int] = None,
    r_outer: Optional[float] = None,
    cache_size: int = 256,
) -> HolomorphicFamily:
    """
    F(z) = A_q(ik) with ik = eps z, on |z| < sqrt(2b). The last
    ``cache_size`` evaluations are kept; refinement and contour checks
    revisit the scan points.
    """
    field = form.problem.field
    eps = form.problem.eps_sign
    limit = math.sqrt(2.0 * field.b)
    outer = min(r_outer, limit) if r_outer is not None else limit

    @lru_cache(maxsize=cache_size)
    def evaluate(z: complex) -> ComplexArray:
        return assemble_a_q(form, q, to_momentum(z, eps), trial, j_max).matrix

    return HolomorphicFamily(
        evaluator=evaluate,
        domain=Annulus(0.0, outer),
        label=f"A_{q}({form.problem.boundary_condition})",
    )


def export_characteristic_values(
    values: Sequence[CharacteristicValue],
    path: Union[str, Path],
    eps_sign: int = 1,
) -> ArtifactEntry:
    """CSV with the values mapped to momenta k = -i eps z."""
    rows = []
    for v in values:
        k = to_momentum(v.location, eps_sign)
        rows.append(
            {
                "re_k": k.real,
                "im_k": k.imag,
                "sigma_min": v.residual,
                "multiplicity": v.multiplicity,
                "contour_radius": v.contour_radius,
                "integer_defect": v.integer_defect,
            }
        )
    return write_csv(rows, path, CHARVAL_COLUMNS, name="characteristic_values")
