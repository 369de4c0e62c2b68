"""
Experiment orchestration: one function per experiment kind, each writing
plot-ready CSV tables (and matrix containers) into the run directory and
returning its checks. ``run`` wraps them with the run manifest.
"""

from __future__ import annotations

import math
import time
import traceback
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import structlog
from scipy import integrate
from scipy.spatial import ConvexHull

from . import __version__
from .bs import (
    ObstacleProblem,
    PerturbationForm,
    TrialSpace,
    assemble_a_q,
    cd1_diagnostic,
    graded_eigenvalues,
    sign_check,
    t_q_matrix,
)
from .bem import (
    BoundaryMaps,
    eval_layer_potential,
    export_operator,
    jump_relation_check,
)
from .charval import (
    PolarGrid,
    additivity_check,
    birman_schwinger_family,
    characteristic_values,
    counting_transfer_check,
    export_characteristic_values,
    sector_check,
    synthetic_family,
    to_momentum,
)
from .config import get_quadrature_spec
from .exceptions import LandauresError
from .green import green_function
from .landau import (
    counting_law_ratio,
    disk_toeplitz_eigenvalues,
    landau_level,
    projection_kernel,
    toeplitz_matrix,
)
from .mesh import SurfaceMesh, mesh_from_obstacle
from .models import (
    ArtifactEntry,
    CountingFunction,
    CountingTransferReport,
    DiskRegion,
    ExperimentConfig,
    FieldConfig,
    RunRecord,
    SectorSpec,
)
from .utils.artifacts import write_csv, write_manifest, write_matrix
from .utils.integrity import compute_config_hash, compute_file_hash

logger = structlog.get_logger()

CHECK_COLUMNS = ("check", "value", "expected", "tolerance", "passed")
CLASSICAL_FIELD = 1e-12


@dataclass
class ExperimentResult:
    """Artifacts and checks produced by one experiment."""

    outputs: List[ArtifactEntry] = dataclass_field(default_factory=list)
    checks: List[Dict[str, Any]] = dataclass_field(default_factory=list)

    def check(
        self,
        name: str,
        value: float,
        expected: float,
        tolerance: float,
        passed: Optional[bool] = None,
    ) -> None:
        ok = abs(value - expected) <= tolerance if passed is None else passed
        self.checks.append(
            {
                "check": name,
                "value": float(value),
                "expected": float(expected),
                "tolerance": float(tolerance),
                "passed": bool(ok),
            }
        )

    @property
    def failures(self) -> List[str]:
        return [
            f"{c['check']}: value {c['value']:.6e}, expected {c['expected']:.6e}"
            f" +/- {c['tolerance']:.1e}"
            for c in self.checks
            if not c["passed"]
        ]

    def write_checks(self, out: Path) -> None:
        self.outputs.append(
            write_csv(self.checks, out / "checks.csv", CHECK_COLUMNS, name="checks")
        )


def _field(config: ExperimentConfig) -> FieldConfig:
    return FieldConfig(b=config.b, gauge_center=config.gauge_center)


def _problem(config: ExperimentConfig, mesh: SurfaceMesh) -> ObstacleProblem:
    field = _field(config)
    if config.boundary_condition == "neumann":
        return ObstacleProblem.neumann(mesh, field)
    if config.boundary_condition == "robin":
        return ObstacleProblem(mesh, field, "robin", config.gamma)
    return ObstacleProblem(mesh, field)


def _form(config: ExperimentConfig) -> PerturbationForm:
    mesh = mesh_from_obstacle(config.obstacle)
    return PerturbationForm(
        _problem(config, mesh), quad=get_quadrature_spec(), threads=config.threads
    )


def run_landau_levels(config: ExperimentConfig, out: Path) -> ExperimentResult:
    field = _field(config)
    result = ExperimentResult()
    center = np.array(field.gauge_center)
    rows = []
    for q in range(config.qmax + 1):
        level = landau_level(q, field)
        diag = complex(projection_kernel(q, field, center, center))
        rows.append({"q": q, "level": level, "kernel_diagonal": diag.real})
        result.check(f"level_{q}", level, (2 * q + 1) * field.b, 1e-12 * level)
        result.check(f"kernel_diagonal_{q}", diag.real, field.b / (2 * np.pi), 1e-12)
    result.outputs.append(
        write_csv(rows, out / "landau_levels.csv", ("q", "level", "kernel_diagonal"))
    )
    return result


def run_toeplitz_spectrum(config: ExperimentConfig, out: Path) -> ExperimentResult:
    field = _field(config)
    result = ExperimentResult()
    region = config.region or DiskRegion(center=config.gauge_center, radius=1.0)
    op = toeplitz_matrix(config.q, field, region, config.n_modes)
    eigs = op.eigenvalues()
    centered = isinstance(region, DiskRegion) and np.allclose(
        region.center, field.gauge_center
    )
    oracle: Optional[np.ndarray] = None
    if isinstance(region, DiskRegion) and centered:
        oracle = np.sort(
            disk_toeplitz_eigenvalues(config.q, field, region.radius, config.n_modes)
        )[::-1]
    rows = []
    for i, lam in enumerate(eigs):
        row: Dict[str, Any] = {"index": i, "eigenvalue": float(lam)}
        if oracle is not None:
            row["oracle"] = float(oracle[i])
            row["abs_error"] = abs(float(lam) - float(oracle[i]))
        rows.append(row)
    columns: Tuple[str, ...] = ("index", "eigenvalue")
    if oracle is not None:
        columns += ("oracle", "abs_error")
        worst = max(r["abs_error"] for r in rows)
        result.check("disk_oracle_max_error", worst, 0.0, 1e-6)
        # counting law on the closed form, which resolves any r
        assert isinstance(region, DiskRegion)
        cf = CountingFunction.from_values(
            disk_toeplitz_eigenvalues(config.q, field, region.radius, 400),
            clip=1e-300,
        )
        law = []
        for exponent in (10, 20, 40):
            r = 10.0**-exponent
            law.append(
                {
                    "r": r,
                    "ratio": counting_law_ratio(cf, r),
                    "refined_ratio": counting_law_ratio(cf, r, refined=True),
                }
            )
        result.outputs.append(
            write_csv(law, out / "counting_law.csv", ("r", "ratio", "refined_ratio"))
        )
    result.outputs.append(write_csv(rows, out / "toeplitz_spectrum.csv", columns))
    return result


def _small_field_constant() -> float:
    """int_0^inf s^{-3/2} (s / sinh s - 1) ds."""

    def integrand(s: float) -> float:
        return s**-1.5 * (s / math.sinh(s) - 1.0) if s < 700 else -(s**-1.5)

    value, _ = integrate.quad(integrand, 0.0, np.inf, limit=200)
    return float(value)


def run_green_check(config: ExperimentConfig, out: Path) -> ExperimentResult:
    field = _field(config)
    result = ExperimentResult()
    quad = get_quadrature_spec()
    fine = quad.doubled()
    x = np.array([*field.gauge_center, 0.0])
    direction = np.array([0.6, 0.0, 0.8])
    rows = []
    for d in (1e-3, 1e-2, 1e-1, 0.5, 1.0, 2.0):
        y = x + d * direction
        g = complex(green_function(x, y, field, quad))
        g2 = complex(green_function(x, y, field, fine))
        change = abs(g - g2) / abs(g)
        rows.append(
            {
                "distance": d,
                "re_g": g.real,
                "im_g": g.imag,
                "scaled_abs": 4 * np.pi * d * abs(g),
                "free": 1.0 / (4 * np.pi * d),
                "doubling_change": change,
            }
        )
        if d >= 1e-2:
            result.check(f"doubling_{d:g}", change, 0.0, 1e-8)
    result.check("near_singular_scaled", rows[0]["scaled_abs"], 1.0, 0.05)
    result.outputs.append(
        write_csv(
            rows,
            out / "green_kernel.csv",
            ("distance", "re_g", "im_g", "scaled_abs", "free", "doubling_change"),
        )
    )

    y = x + direction
    free = 1.0 / (4 * np.pi)
    classical = abs(complex(green_function(x, y, FieldConfig(b=CLASSICAL_FIELD))))
    result.check("classical_limit", classical / free, 1.0, 1e-6)
    small = 1e-8
    expected = free + math.sqrt(small) * _small_field_constant() / (4 * np.pi) ** 1.5
    value = complex(green_function(x, y, FieldConfig(b=small))).real
    result.check("small_field_shift", value / expected, 1.0, 1e-6)
    result.outputs.append(
        write_csv(
            [
                {"b": CLASSICAL_FIELD, "value": classical, "oracle": free},
                {"b": small, "value": value, "oracle": expected},
            ],
            out / "green_limit.csv",
            ("b", "value", "oracle"),
        )
    )
    return result


def run_bem_validate(config: ExperimentConfig, out: Path) -> ExperimentResult:
    field = _field(config)
    result = ExperimentResult()
    mesh = mesh_from_obstacle(config.obstacle)
    maps = BoundaryMaps.build(
        mesh, field, 0.0, get_quadrature_spec(), threads=config.threads
    )
    S, D = maps.single, maps.double
    ones = np.ones(mesh.n_panels)
    s1 = S @ ones
    d1 = D @ ones
    center = np.asarray(mesh.shape.center)
    R = float(np.mean(np.linalg.norm(mesh.centroids - center, axis=1)))
    inside = complex(eval_layer_potential(mesh, ones, "double", center, field))
    outside = complex(
        eval_layer_potential(mesh, ones, "double", center + [0.0, 0.0, 3 * R], field)
    )
    dn_ext = maps.dirichlet_robin("exterior") @ ones
    dn_int = maps.dirichlet_robin("interior") @ ones
    jump = jump_relation_check(mesh, ones, field, single=S, double=D)
    rows = [
        {"quantity": "single_layer_mean", "value": float(np.mean(s1.real))},
        {"quantity": "double_layer_mean", "value": float(np.mean(d1.real))},
        {"quantity": "double_potential_inside", "value": inside.real},
        {"quantity": "double_potential_outside", "value": outside.real},
        {"quantity": "dn_exterior_mean", "value": float(np.mean(dn_ext.real))},
        {"quantity": "dn_interior_mean", "value": float(np.mean(dn_int.real))},
        {"quantity": "hermiticity_defect", "value": S.hermiticity_defect()},
        {"quantity": "jump_residual", "value": jump.max_residual},
    ]
    result.outputs.append(
        write_csv(rows, out / "bem_validate.csv", ("quantity", "value"))
    )
    result.outputs.append(export_operator(S, out / "single_layer"))
    result.outputs.append(export_operator(D, out / "double_layer"))
    result.check("hermiticity", S.hermiticity_defect(), 0.0, 1e-8)
    classical = config.b <= 1e-6 and mesh.shape.kind == "sphere"
    if classical:
        result.check("single_layer_constant", float(np.max(np.abs(s1 - R))), 0.0, 2e-3)
        result.check("gauss_surface", float(np.max(np.abs(d1 + 0.5))), 0.0, 5e-3)
        result.check("gauss_inside", inside.real, -1.0, 5e-3)
        result.check("gauss_outside", outside.real, 0.0, 5e-3)
        result.check("dn_exterior", float(np.mean(dn_ext.real)), -1.0 / R, 5e-2)
        result.check("dn_interior", float(np.mean(dn_int.real)), 0.0, 5e-2)
        result.check("jump_relations", jump.max_residual, 0.0, 5e-2)
    return result


def _shadow_radii(mesh: SurfaceMesh) -> Tuple[float, float]:
    """Radii of disks inscribed in and circumscribing the planar shadow."""
    if mesh.is_analytic:
        axes = np.asarray(mesh.shape.semi_axes[:2], dtype=float)
        return float(axes.min()), float(axes.max())
    planar = mesh.vertices[:, :2]
    hull = ConvexHull(planar)
    c = planar[hull.vertices].mean(axis=0)
    inner = float(np.min(-(hull.equations[:, :2] @ c + hull.equations[:, 2])))
    outer = float(np.max(np.linalg.norm(planar - c, axis=1)))
    return inner, outer


def run_tq_spectrum(config: ExperimentConfig, out: Path) -> ExperimentResult:
    result = ExperimentResult()
    form = _form(config)
    problem = form.problem
    q = config.q
    T = t_q_matrix(form, q, config.n_modes)
    eigs = graded_eigenvalues(T)
    inner, outer = _shadow_radii(problem.mesh)
    disk_in = np.sort(
        disk_toeplitz_eigenvalues(q, problem.field, inner, config.n_modes)
    )[::-1]
    disk_out = np.sort(
        disk_toeplitz_eigenvalues(q, problem.field, outer, config.n_modes)
    )[::-1]
    rows = []
    top = float(eigs[0]) if eigs.size else 0.0
    for i, lam in enumerate(eigs):
        resolvable = lam > 1e-13 * top and disk_in[i] > 0 and disk_out[i] > 0
        rows.append(
            {
                "index": i,
                "eigenvalue": float(lam),
                "inscribed": float(disk_in[i]),
                "circumscribed": float(disk_out[i]),
                "log_ratio_inscribed": (
                    math.log(lam) / math.log(disk_in[i]) if resolvable else math.nan
                ),
                "log_ratio_circumscribed": (
                    math.log(lam) / math.log(disk_out[i]) if resolvable else math.nan
                ),
            }
        )
    result.outputs.append(
        write_csv(
            rows,
            out / "tq_spectrum.csv",
            (
                "index",
                "eigenvalue",
                "inscribed",
                "circumscribed",
                "log_ratio_inscribed",
                "log_ratio_circumscribed",
            ),
        )
    )
    header = {
        "kind": f"t_{q}",
        "b": config.b,
        "boundary_condition": problem.boundary_condition,
        "mesh_sha256": problem.mesh.mesh_hash(),
    }
    result.outputs.append(write_matrix(T, out / "t_q", header))

    result.check(
        "nonnegative",
        float(eigs.min()) if eigs.size else 0.0,
        0.0,
        1e-8 * max(top, 1.0),
        passed=bool(eigs.size == 0 or eigs.min() >= -1e-8 * max(top, 1.0)),
    )
    for row in rows[5:21]:
        for key in ("log_ratio_inscribed", "log_ratio_circumscribed"):
            value = row[key]
            if math.isnan(value):
                continue
            result.check(
                f"{key}_{row['index']}", value, 1.25, 0.75, passed=0.5 <= value <= 2.0
            )

    trial = TrialSpace.build(problem, [q], config.n_modes, n_axial=config.n_axial)
    A0 = assemble_a_q(form, q, 0.0, trial, config.j_max)
    flat = A0.q_flat
    block = A0.matrix[np.ix_(flat, flat)]
    result.check("a_q_zero_matches_t_q", float(np.max(np.abs(block - T))), 0.0, 1e-8)
    result.outputs.append(
        write_matrix(A0.matrix, out / "a_q_zero", {**header, "kind": f"a_{q}(0)"})
    )

    sign = sign_check(form, trial)
    result.check(
        "sign_definite",
        sign.min_eigenvalue if sign.boundary_condition == "dirichlet"
        else sign.max_eigenvalue,
        0.0,
        sign.tolerance * sign.scale,
        passed=sign.passed,
    )
    cond = cd1_diagnostic(form, q, trial, config.j_max)
    result.outputs.append(
        write_csv(
            [{"q": q, "condition_number": cond}],
            out / "cd1_diagnostic.csv",
            ("q", "condition_number"),
        )
    )
    return result


def _transfer_rows(transfer: CountingTransferReport) -> List[Dict[str, Any]]:
    return [row.model_dump() | {"difference": row.difference} for row in transfer.rows]


def run_resonance_scan(config: ExperimentConfig, out: Path) -> ExperimentResult:
    result = ExperimentResult()
    form = _form(config)
    problem = form.problem
    scale = math.sqrt(config.b)
    r_inner, r_outer = config.k_min * scale, config.k_max * scale
    trial = TrialSpace.build(
        problem, [config.q], config.n_modes, n_axial=config.n_axial
    )
    family = birman_schwinger_family(
        form, config.q, trial, j_max=config.j_max, r_outer=1.5 * r_outer
    )
    grid = PolarGrid(r_inner, r_outer, config.grid_radial, config.grid_angular)
    values = characteristic_values(
        family, grid, config.threshold, threads=config.threads
    )
    eps = problem.eps_sign
    result.outputs.append(
        export_characteristic_values(values, out / "characteristic_values.csv", eps)
    )

    momenta = [to_momentum(v.location, eps) for v in values]
    orientation = "negative_imaginary" if eps > 0 else "positive_imaginary"
    sector = sector_check(
        momenta,
        SectorSpec(half_angle=config.sector_half_angle, orientation=orientation),
        r_inner,
        r_outer,
    )
    if eps > 0:
        result.check(
            "sector_localization", sector.inner_half_fraction, 1.0, 0.0,
            passed=sector.passed,
        )
    else:
        result.check(
            "half_plane", sector.sign_fraction, 1.0, 0.0,
            passed=sector.sign_fraction == 1.0,
        )

    T = t_q_matrix(form, config.q, config.n_modes)
    a0 = CountingFunction.from_values(graded_eigenvalues(T), "t_q")
    transfer = counting_transfer_check(family, a0, grid, values=values)
    result.outputs.append(
        write_csv(
            _transfer_rows(transfer),
            out / "counting_transfer.csv",
            ("r", "n_values", "n_a0", "difference"),
        )
    )
    result.check(
        "counting_transfer",
        transfer.max_abs_difference,
        0.0,
        transfer.allowed_difference,
    )
    return result


def run_charval_selftest(config: ExperimentConfig, out: Path) -> ExperimentResult:
    result = ExperimentResult()
    spectrum = np.asarray(config.spectrum, dtype=float)
    family = synthetic_family(spectrum, config.perturbation_scale, config.seed)
    planted = np.sort(spectrum[spectrum != 0])
    mags = np.abs(planted)
    r_inner, r_outer = 0.5 * mags.min(), 2.0 * mags.max()
    octaves = math.log2(r_outer / r_inner)
    n_radial = max(config.grid_radial, int(math.ceil(4 * octaves)) + 1)
    grid = PolarGrid(r_inner, r_outer, n_radial, config.grid_angular)
    values = characteristic_values(family, grid, config.threshold)
    result.outputs.append(
        export_characteristic_values(values, out / "characteristic_values.csv")
    )

    found = np.array([v.location for v in values])
    recalled = sum(
        1
        for lam in planted
        if found.size and np.min(np.abs(found - lam)) <= 1e-2 * abs(lam)
    )
    result.check("recall", recalled / planted.size, 1.0, 0.0)
    worst_defect = max((v.integer_defect for v in values), default=0.0)
    result.check("integer_defect", worst_defect, 0.0, 1e-6)
    if np.all(spectrum >= 0):
        lowest = min((v.re for v in values), default=0.0)
        result.check("sign_rule", lowest, 0.0, 1e-8, passed=lowest >= -1e-8)

    positive = np.sort(planted[planted > 0])
    radii = np.sqrt(positive[1:] * positive[:-1])
    cf = CountingFunction.from_values(positive, "synthetic")
    transfer = counting_transfer_check(
        family, cf, grid, radii=list(radii), values=values, allowed_difference=0
    )
    result.outputs.append(
        write_csv(
            _transfer_rows(transfer),
            out / "counting_transfer.csv",
            ("r", "n_values", "n_a0", "difference"),
        )
    )
    result.check("counting_transfer", transfer.max_abs_difference, 0.0, 0.0)

    real_found = np.sort(np.array([v.re for v in values]))[::-1]
    if real_found.size >= 3:
        v1, v2, v3 = real_found[:3]
        d = min((v1 - v2) / 3.0, (v2 - v3) / 2.0)
        additivity = additivity_check(
            family, complex(v2 - d, -d), complex(v1 + d, d), splits=(2, 1)
        )
        result.check(
            "additivity",
            additivity.total,
            float(sum(additivity.parts)),
            0.0,
            passed=additivity.passed,
        )
    return result


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig, Path], ExperimentResult]] = {
    "landau-levels": run_landau_levels,
    "toeplitz-spectrum": run_toeplitz_spectrum,
    "green-check": run_green_check,
    "bem-validate": run_bem_validate,
    "tq-spectrum": run_tq_spectrum,
    "resonance-scan": run_resonance_scan,
    "charval-selftest": run_charval_selftest,
}


def input_hash(config: ExperimentConfig) -> str:
    """Content hash of everything the results depend on."""
    payload = config.model_dump(mode="json", exclude={"out", "threads"})
    if config.obstacle.mesh_path:
        payload["mesh_file"] = compute_file_hash(config.obstacle.mesh_path)
    return compute_config_hash(payload)


def _provenance(error: BaseException) -> str:
    frames = traceback.extract_tb(error.__traceback__)
    module = Path(frames[-1].filename).stem if frames else "landaures"
    return f"{module}: {type(error).__name__}: {error}"


def run(config: ExperimentConfig, out_dir: Optional[Path] = None) -> RunRecord:
    """
    Execute one experiment, write its artifacts and manifest, and return the
    manifest. Numerical errors end the run as a failed record.
    """
    out = Path(out_dir or config.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    result = ExperimentResult()
    failures: List[str] = []
    logger.info("experiment_started", kind=config.kind, out=str(out))
    try:
        result = EXPERIMENTS[config.kind](config, out)
        result.write_checks(out)
        failures = result.failures
    except LandauresError as e:
        failures = [_provenance(e)]
        logger.error("experiment_failed", kind=config.kind, error=failures[0])
    record = RunRecord(
        experiment=config.kind,
        config=config.model_dump(mode="json"),
        input_hash=input_hash(config),
        landaures_version=__version__,
        wall_time_s=time.perf_counter() - started,
        passed=not failures,
        failures=failures,
        outputs=result.outputs,
    )
    write_manifest(record, out)
    logger.info(
        "experiment_finished",
        kind=config.kind,
        passed=record.passed,
        outputs=len(record.outputs),
        seconds=record.wall_time_s,
    )
    return record
