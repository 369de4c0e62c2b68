import math

import numpy as np
import pytest

from landaures.exceptions import DomainError, QuadratureError
from landaures.landau import (
    angular_mode,
    angular_mode_gradient,
    counting_function,
    counting_law_ratio,
    disk_toeplitz_eigenvalues,
    landau_level,
    projection_kernel,
    region_rule,
    toeplitz_matrix,
)
from landaures.models import (
    CountingFunction,
    DiskRegion,
    FieldConfig,
    GridRegion,
    PolygonRegion,
)
from landaures.quadrature import gauss_legendre


def make_plane_grid(half_width: float = 12.0, n: int = 96) -> tuple:
    x, w = gauss_legendre(n, -half_width, half_width)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    return pts, np.outer(w, w).ravel()


def central_difference(
    q: int, k: int, field: FieldConfig, x: np.ndarray, step: np.ndarray
) -> complex:
    forward = angular_mode(q, k, field, x + step)
    backward = angular_mode(q, k, field, x - step)
    return complex((forward - backward) / (2 * np.linalg.norm(step)))


def make_counting_function() -> CountingFunction:
    values = disk_toeplitz_eigenvalues(0, FieldConfig(b=2.0), 1.0, 400)
    return CountingFunction.from_values(values, "disk q=0 b=2 R=1")


def test_landau_levels(field: FieldConfig) -> None:
    assert landau_level(0, field) == 1.0
    assert landau_level(3, FieldConfig(b=2.0)) == 14.0
    with pytest.raises(DomainError):
        landau_level(-1, field)


@pytest.mark.parametrize("q", [0, 1, 3])
def test_kernel_diagonal_and_hermiticity(q: int) -> None:
    field = FieldConfig(b=1.7, gauge_center=(0.2, -0.4))
    x = np.array([[0.3, -0.1], [1.2, 0.8], [-2.0, 0.5]])
    y = np.array([[0.9, 0.4], [-0.6, 0.1], [0.0, -1.3]])
    diag = projection_kernel(q, field, x, x)
    assert np.allclose(diag, field.b / (2 * math.pi), atol=1e-14)
    assert np.allclose(
        projection_kernel(q, field, x, y),
        np.conj(projection_kernel(q, field, y, x)),
        atol=1e-14,
    )


@pytest.mark.parametrize("q", [0, 1])
def test_projection_is_idempotent(q: int, field: FieldConfig) -> None:
    pts, w = make_plane_grid()
    x = np.array([0.4, -0.3])
    y = np.array([-0.5, 0.7])
    left = projection_kernel(q, field, x[None, :], pts)
    right = projection_kernel(q, field, pts, y[None, :])
    composed = np.sum(left * right * w)
    assert abs(composed - projection_kernel(q, field, x, y)) < 1e-6


def test_distinct_levels_are_orthogonal(field: FieldConfig) -> None:
    pts, w = make_plane_grid()
    x = np.array([0.4, -0.3])
    y = np.array([-0.5, 0.7])
    left = projection_kernel(0, field, x[None, :], pts)
    right = projection_kernel(2, field, pts, y[None, :])
    assert abs(np.sum(left * right * w)) < 1e-6


@pytest.mark.parametrize("q", [0, 2])
def test_angular_modes_are_orthonormal(q: int) -> None:
    field = FieldConfig(b=1.0)
    op = toeplitz_matrix(q, field, DiskRegion(radius=12.0), 8, n_radial=160)
    assert np.allclose(op.matrix, np.eye(8), atol=1e-8)


def test_angular_modes_reproduce_kernel() -> None:
    field = FieldConfig(b=2.0)
    x = np.array([[0.3, 0.2]])
    y = np.array([[-0.1, 0.4]])
    total = sum(
        angular_mode(0, k, field, x) * np.conj(angular_mode(0, k, field, y))
        for k in range(60)
    )
    assert np.allclose(total, projection_kernel(0, field, x, y), atol=1e-12)


def test_angular_mode_gradient_matches_finite_difference() -> None:
    field = FieldConfig(b=1.3, gauge_center=(0.1, 0.2))
    x = np.array([0.7, -0.4])
    h = 1e-6
    for q, k in ((0, 0), (0, 3), (2, 0), (2, 5)):
        d1, d2 = angular_mode_gradient(q, k, field, x)
        fd1 = central_difference(q, k, field, x, np.array([h, 0.0]))
        fd2 = central_difference(q, k, field, x, np.array([0.0, h]))
        assert abs(d1 - fd1) < 1e-7
        assert abs(d2 - fd2) < 1e-7


def test_angular_mode_rejects_negative_index(field: FieldConfig) -> None:
    with pytest.raises(DomainError):
        angular_mode(0, -1, field, np.zeros(2))


def test_centered_disk_matches_closed_form() -> None:
    field = FieldConfig(b=2.0)
    op = toeplitz_matrix(0, field, DiskRegion(radius=1.0), 6)
    expected = np.array([1 - math.exp(-1), 1 - 2 * math.exp(-1)])
    assert np.allclose(op.eigenvalues()[:2], expected, atol=1e-8)
    off = op.matrix - np.diag(np.diag(op.matrix))
    assert np.max(np.abs(off)) < 1e-9
    oracle = disk_toeplitz_eigenvalues(0, field, 1.0, 6)
    assert np.allclose(np.real(np.diag(op.matrix)), oracle, atol=1e-8)


def test_higher_level_disk_oracle() -> None:
    field = FieldConfig(b=1.5)
    op = toeplitz_matrix(1, field, DiskRegion(radius=1.2), 6)
    oracle = disk_toeplitz_eigenvalues(1, field, 1.2, 6)
    assert np.allclose(np.real(np.diag(op.matrix)), oracle, atol=1e-8)
    assert np.all((oracle > 0) & (oracle < 1))


def test_gauge_shift_leaves_toeplitz_matrix_unchanged() -> None:
    base = toeplitz_matrix(
        0, FieldConfig(b=1.0), DiskRegion(center=(0.3, 0.1), radius=0.8), 6
    )
    shifted = toeplitz_matrix(
        0,
        FieldConfig(b=1.0, gauge_center=(2.0, -1.0)),
        DiskRegion(center=(2.3, -0.9), radius=0.8),
        6,
    )
    assert np.allclose(base.matrix, shifted.matrix, atol=1e-12)


def test_nested_regions_have_ordered_spectra(field: FieldConfig) -> None:
    inner = DiskRegion(center=(0.2, 0.1), radius=0.5)
    middle = DiskRegion(radius=1.0)
    outer = PolygonRegion(vertices=[(-1.5, -1.5), (1.5, -1.5), (1.5, 1.5), (-1.5, 1.5)])
    spectra = [
        toeplitz_matrix(0, field, region, 8).eigenvalues()
        for region in (inner, middle, outer)
    ]
    for small, large in zip(spectra, spectra[1:]):
        assert np.all(small <= large + 1e-9)


def test_polygon_trace_and_spectrum_bounds() -> None:
    field = FieldConfig(b=1.0)
    square = PolygonRegion(vertices=[(-1, -1), (1, -1), (1, 1), (-1, 1)])
    op = toeplitz_matrix(0, field, square, 40)
    eigs = op.eigenvalues()
    assert np.all(eigs >= -1e-12) and np.all(eigs <= 1 + 1e-12)
    assert np.trace(op.matrix).real == pytest.approx(4 / (2 * math.pi), abs=1e-6)


def test_nonconvex_polygon_is_rejected() -> None:
    arrow = PolygonRegion(vertices=[(0, 0), (2, 0), (1, 0.3), (2, 1), (0, 1)])
    with pytest.raises(QuadratureError):
        region_rule(arrow)


def test_grid_region_rule() -> None:
    grid = GridRegion(
        origin=(0.0, 0.0), spacing=0.5, mask=[[True, False], [True, True]]
    )
    pts, w = region_rule(grid)
    assert len(pts) == 3
    assert w.sum() == pytest.approx(0.75)
    with pytest.raises(QuadratureError):
        region_rule(GridRegion(origin=(0.0, 0.0), spacing=1.0, mask=[[False]]))


def test_toeplitz_rejects_empty_basis(field: FieldConfig) -> None:
    with pytest.raises(DomainError):
        toeplitz_matrix(0, field, DiskRegion(radius=1.0), 0)


def test_counting_function_values() -> None:
    cf = make_counting_function()
    assert counting_function(cf, 1e-10) == 12
    assert counting_function(cf, 1e-20) == 20
    assert counting_function(cf, 1e-40) == 34
    with pytest.raises(DomainError):
        counting_function(cf, 0.0)


def test_counting_law_ratios_settle() -> None:
    cf = make_counting_function()
    radii = (1e-10, 1e-20, 1e-40)
    leading = [counting_law_ratio(cf, r) for r in radii]
    refined = [counting_law_ratio(cf, r, refined=True) for r in radii]
    assert leading[0] == pytest.approx(1.6347, abs=1e-3)
    assert all(1.5 <= v <= 1.8 for v in leading)
    assert abs(leading[2] - leading[1]) < abs(leading[1] - leading[0])
    assert all(0.6 <= v <= 1.4 for v in refined)
    assert refined[0] == pytest.approx(1.039, abs=2e-3)


def test_counting_law_ratio_domain() -> None:
    cf = make_counting_function()
    with pytest.raises(DomainError):
        counting_law_ratio(cf, 0.5)
    with pytest.raises(DomainError):
        counting_law_ratio(cf, 0.1, refined=True)
