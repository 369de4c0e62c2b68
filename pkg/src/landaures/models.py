from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class FieldConfig(BaseModel):
    """Constant magnetic field of strength b along x3, in the symmetric gauge."""

    model_config = ConfigDict(frozen=True)

    b: float = Field(..., gt=0, description="Field strength (inverse length squared)")
    gauge_center: Tuple[float, float] = Field(
        (0.0, 0.0), description="Planar reference point of the symmetric gauge"
    )

    def landau_level(self, q: int) -> float:
        return (2 * q + 1) * self.b

    def planar_offset(self, points: ArrayLike) -> NDArray[np.float64]:
        """Planar coordinates relative to the gauge center (last axis >= 2)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts[..., :2] - np.asarray(self.gauge_center, dtype=np.float64)

    def vector_potential(self, points: ArrayLike) -> NDArray[np.float64]:
        """A(x) = (b/2)(-(x2 - c2), x1 - c1, 0) for points of shape (..., 3)."""
        pts = np.asarray(points, dtype=np.float64)
        rel = self.planar_offset(pts)
        out = np.zeros(pts.shape[:-1] + (3,), dtype=np.float64)
        out[..., 0] = -0.5 * self.b * rel[..., 1]
        out[..., 1] = 0.5 * self.b * rel[..., 0]
        return out

    def wedge(self, x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
        """(x - c) ^ (y - c) in the plane."""
        xr = self.planar_offset(x)
        yr = self.planar_offset(y)
        cross: NDArray[np.float64] = xr[..., 0] * yr[..., 1] - xr[..., 1] * yr[..., 0]
        return cross


class QuadratureSpec(BaseModel):
    """Node counts for the split proper-time integral of the Green kernel."""

    model_config = ConfigDict(frozen=True)

    split_point: float = Field(1.0, gt=0, description="Split of the u-integral")
    n_compact: int = Field(48, ge=4, description="Gauss-Legendre nodes on [0, split]")
    n_tail: int = Field(32, ge=4, description="Gauss-Laguerre nodes on [split, inf)")
    tail_cutoff: float = Field(
        60.0, gt=0, description="Tail nodes with u - split beyond this are dropped"
    )

    def doubled(self) -> "QuadratureSpec":
        return self.model_copy(
            update={"n_compact": 2 * self.n_compact, "n_tail": 2 * self.n_tail}
        )


class DiskRegion(BaseModel):
    kind: Literal["disk"] = "disk"
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = Field(..., gt=0)


class PolygonRegion(BaseModel):
    kind: Literal["polygon"] = "polygon"
    vertices: List[Tuple[float, float]] = Field(..., min_length=3)


class GridRegion(BaseModel):
    """Indicator sampled on a rectangular grid of square cells."""

    kind: Literal["grid"] = "grid"
    origin: Tuple[float, float] = Field(..., description="Lower-left corner")
    spacing: float = Field(..., gt=0, description="Cell edge length")
    mask: List[List[bool]] = Field(..., description="mask[row][col], row along x2")


Region = Annotated[
    Union[DiskRegion, PolygonRegion, GridRegion], Field(discriminator="kind")
]


class MeshShape(BaseModel):
    """Analytic shape tag of a surface mesh."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["sphere", "ellipsoid", "general"] = "general"
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    semi_axes: Tuple[float, float, float] = (1.0, 1.0, 1.0)


class CountingFunction(BaseModel):
    """Eigenvalues of a nonnegative compact operator, sorted descending."""

    eigenvalues: List[float] = Field(default_factory=list)
    description: str = ""

    @field_validator("eigenvalues")
    @classmethod
    def _sorted_nonnegative(cls, values: List[float]) -> List[float]:
        if any(v < 0 for v in values):
            raise ValueError("counting function eigenvalues must be nonnegative")
        if any(a < b for a, b in zip(values, values[1:])):
            raise ValueError("counting function eigenvalues must be sorted descending")
        return values

    @classmethod
    def from_values(
        cls, values: ArrayLike, description: str = "", clip: float = 0.0
    ) -> "CountingFunction":
        """Sort descending and drop entries below ``clip`` (negatives always)."""
        arr = np.sort(np.real(np.asarray(values, dtype=np.complex128)))[::-1]
        arr = arr[arr > max(clip, 0.0)] if clip > 0 else arr[arr >= 0]
        return cls(eigenvalues=[float(v) for v in arr], description=description)


class CharacteristicValue(BaseModel):
    """A located characteristic value of I - A(z)/z."""

    re: float
    im: float
    multiplicity: int = Field(..., ge=1)
    residual: float = Field(..., description="sigma_min(I - A(z)/z) at the location")
    contour_radius: float = 0.0
    integer_defect: float = 0.0

    @property
    def location(self) -> complex:
        return complex(self.re, self.im)


class SectorSpec(BaseModel):
    half_angle: float = Field(..., gt=0, lt=math.pi / 2)
    orientation: Literal["negative_imaginary", "positive_imaginary"]


class MapDiagnostics(BaseModel):
    kind: str
    condition_number: float
    smallest_singular_value: float = Field(
        ..., description="Smallest singular value relative to the largest"
    )


class JumpReport(BaseModel):
    """Residuals of the layer-potential limit relations at sampled panels."""

    offset: float
    n_points: int
    double_exterior_residual: float
    double_interior_residual: float
    single_continuity_residual: float

    @property
    def max_residual(self) -> float:
        return max(
            self.double_exterior_residual,
            self.double_interior_residual,
            self.single_continuity_residual,
        )


class SignReport(BaseModel):
    boundary_condition: Literal["dirichlet", "robin"]
    dimension: int
    min_eigenvalue: float
    max_eigenvalue: float
    scale: float
    tolerance: float
    passed: bool


class SectorReport(BaseModel):
    n_values: int
    inside_fraction: float
    sign_fraction: float = Field(
        ..., description="Fraction on the expected side of the real axis"
    )
    inner_half_fraction: float
    max_offaxis_ratio: float
    passed: bool


class CountingTransferRow(BaseModel):
    r: float
    n_values: int
    n_a0: int

    @property
    def difference(self) -> int:
        return self.n_values - self.n_a0


class CountingTransferReport(BaseModel):
    rows: List[CountingTransferRow]
    max_abs_difference: int
    allowed_difference: int
    passed: bool


class AdditivityReport(BaseModel):
    total: int
    parts: List[int]
    max_integer_defect: float
    passed: bool


class ObstacleSpec(BaseModel):
    shape: Literal["sphere", "ellipsoid", "mesh"] = "sphere"
    radius: float = Field(1.0, gt=0)
    semi_axes: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    mesh_path: Optional[str] = None
    refinement: int = Field(2, ge=0, le=5)

    @model_validator(mode="after")
    def _mesh_needs_path(self) -> "ObstacleSpec":
        if self.shape == "mesh" and not self.mesh_path:
            raise ValueError("obstacle shape 'mesh' requires mesh_path")
        return self


ExperimentKind = Literal[
    "landau-levels",
    "toeplitz-spectrum",
    "green-check",
    "bem-validate",
    "tq-spectrum",
    "resonance-scan",
    "charval-selftest",
]


class ExperimentConfig(BaseModel):
    """Everything an experiment run depends on; hashed into the run manifest."""

    kind: ExperimentKind
    b: float = Field(1.0, gt=0)
    gauge_center: Tuple[float, float] = (0.0, 0.0)
    obstacle: ObstacleSpec = Field(default_factory=ObstacleSpec)
    boundary_condition: Literal["dirichlet", "neumann", "robin"] = "dirichlet"
    gamma: float = 0.0
    q: int = Field(0, ge=0)
    qmax: int = Field(3, ge=0)
    region: Optional[Region] = None
    n_modes: int = Field(12, ge=1)
    j_max: Optional[int] = Field(None, ge=0)
    n_axial: int = Field(1, ge=1)
    grid_radial: int = Field(12, ge=2)
    grid_angular: int = Field(24, ge=4)
    k_min: float = Field(0.05, gt=0, description="Inner |k| in units of sqrt(b)")
    k_max: float = Field(0.2, gt=0, description="Outer |k| in units of sqrt(b)")
    threshold: float = Field(1e-2, gt=0)
    sector_half_angle: float = Field(0.3, gt=0, lt=math.pi / 2)
    spectrum: List[float] = Field(
        default_factory=lambda: [2.0 ** (-j) for j in range(1, 13)]
    )
    perturbation_scale: float = Field(1e-3, ge=0)
    seed: int = 0
    threads: int = Field(1, ge=1)
    out: str = "runs"

    @model_validator(mode="after")
    def _annulus_ordered(self) -> "ExperimentConfig":
        if self.k_min >= self.k_max:
            raise ValueError("k_min must be smaller than k_max")
        return self


class ArtifactEntry(BaseModel):
    name: str
    path: str
    sha256: str
    rows: Optional[int] = None


class RunRecord(BaseModel):
    """Manifest written next to the artifacts of one experiment run."""

    experiment: ExperimentKind
    config: Dict[str, Any]
    input_hash: str
    landaures_version: str
    wall_time_s: float
    passed: bool
    failures: List[str] = Field(default_factory=list)
    outputs: List[ArtifactEntry] = Field(default_factory=list)


class ArtifactDiff(BaseModel):
    name: str
    change_type: Literal["changed", "added", "removed"]
    max_abs_diff: Optional[float] = None
    max_rel_diff: Optional[float] = None
    within_tolerance: bool = True


class RunDiff(BaseModel):
    experiment: str
    tolerance: float
    artifacts: List[ArtifactDiff] = Field(default_factory=list)

    @property
    def has_changes(self) -> bool:
        return bool(self.artifacts)


class PanelQuadratureSpec(BaseModel):
    """Panel rules used by the boundary-element assembly."""

    model_config = ConfigDict(frozen=True)

    far_order: int = Field(3, ge=1, description="Collapsed Gauss order, far panels")
    near_factor: float = Field(
        2.0, gt=0, description="Panels closer than this many diameters are near"
    )
    near_order: int = Field(3, ge=1)
    near_levels: int = Field(2, ge=0, le=5, description="Midpoint subdivisions")
    self_order: int = Field(8, ge=2, description="Duffy order on the self panel")
    principal_order: int = Field(
        24, ge=2, description="Duffy order for the principal part on the self panel"
    )
    potential_order: int = Field(6, ge=1)
    max_adaptive_levels: int = Field(8, ge=0, le=12)
    chunk_pairs: int = Field(100_000, ge=1000)
