import math

import numpy as np
import pytest
from scipy import integrate

from landaures.exceptions import BranchError, DomainError, SingularityError
from landaures.green import (
    axial_frequency,
    axial_resolvent_kernel,
    green_function,
    green_function_free_split,
    green_gradient,
    green_integral,
    green_normal_derivative,
    heat_kernel,
    near_diagonal_principal,
    r_kernel,
)
from landaures.models import FieldConfig, QuadratureSpec


def small_field_constant() -> float:
    value, _ = integrate.quad(
        lambda s: s**-1.5 * (s / math.sinh(s) - 1.0) if s > 0 else 0.0,
        0.0,
        np.inf,
        limit=400,
    )
    return float(value)


def test_heat_kernel_weak_field_limit() -> None:
    field = FieldConfig(b=1e-9)
    x = np.array([0.1, 0.2, 0.3])
    y = np.array([-0.4, 0.6, 1.0])
    t = 0.7
    r2 = float(np.sum((x - y) ** 2))
    free = (4 * math.pi * t) ** -1.5 * math.exp(-r2 / (4 * t))
    assert abs(heat_kernel(t, x, y, field) - free) <= 1e-6 * free


def test_heat_kernel_large_time_does_not_overflow(field: FieldConfig) -> None:
    value = heat_kernel(400.0, np.zeros(3), np.array([0.5, 0.0, 0.0]), field)
    assert np.isfinite(value) and abs(value) < 1e-100


def test_heat_kernel_rejects_nonpositive_time(field: FieldConfig) -> None:
    with pytest.raises(DomainError):
        heat_kernel(0.0, np.zeros(3), np.ones(3), field)


@pytest.mark.parametrize("d", [1e-2, 0.3, 1.0, 4.0])
def test_classical_limit(d: float) -> None:
    field = FieldConfig(b=1e-12)
    g = green_function(np.zeros(3), np.array([d, 0.0, 0.0]), field)
    classical = 1.0 / (4 * math.pi * d)
    assert abs(g - classical) <= 1e-6 * classical


def test_small_field_constant_sanity() -> None:
    assert abs(small_field_constant() + 1.51626) < 1e-3


def test_small_field_shift(weak_field: FieldConfig) -> None:
    g = green_function(np.zeros(3), np.array([0.0, 0.0, 1.0]), weak_field)
    shift = (g.real - 1.0 / (4 * math.pi)) * (4 * math.pi) ** 1.5
    shift /= math.sqrt(weak_field.b)
    assert shift == pytest.approx(small_field_constant(), rel=1e-2)
    assert abs(g.imag) < 1e-14


def test_near_singular_behaviour(field: FieldConfig) -> None:
    d = 1e-3
    x = np.array([0.2, -0.1, 0.4])
    y = x + np.array([d, 0.0, 0.0])
    g = green_function(x, y, field)
    assert 0.95 <= 4 * math.pi * d * abs(g) <= 1.05
    assert abs(g - near_diagonal_principal(x, y, field)) < 1.0


def test_principal_part_ratio_tends_to_one(field: FieldConfig) -> None:
    x = np.array([0.2, -0.1, 0.4])
    direction = np.array([2.0, 1.0, 2.0]) / 3.0
    gaps = []
    for h in (1e-1, 1e-2, 1e-3, 1e-4):
        y = x + h * direction
        ratio = green_function(x, y, field) / near_diagonal_principal(x, y, field)
        assert abs(ratio.imag) < 1e-12
        gaps.append(abs(ratio - 1.0))
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


def test_tail_leg_is_uniformly_bounded(field: FieldConfig) -> None:
    rng = np.random.default_rng(4)
    x = rng.uniform(-2.0, 2.0, size=(200, 3))
    scales = np.geomspace(1e-4, 5.0, 200)[:, None]
    y = x + scales * rng.normal(size=(200, 3))
    _, _, tail = green_integral(x, y, field)
    # the tail integrand decreases with the separation
    _, _, peak = green_integral(np.zeros(3), np.array([0.0, 0.0, 1e-9]), field)
    assert np.all(np.isfinite(tail)) and np.all(tail >= 0)
    assert np.max(tail) <= float(peak) * (1.0 + 1e-9)


@pytest.mark.parametrize("d", [1e-2, 0.1, 1.0, 3.0])
def test_quadrature_doubling_is_converged(d: float, field: FieldConfig) -> None:
    quad = QuadratureSpec()
    x = np.array([0.3, 0.1, -0.2])
    direction = np.array([1.0, 2.0, 2.0]) / 3.0
    y = x + d * direction
    base = green_function(x, y, field, quad)
    doubled = green_function(x, y, field, quad.doubled())
    assert abs(base - doubled) < 1e-8


def test_coincident_points_raise(field: FieldConfig) -> None:
    x = np.array([0.1, 0.2, 0.3])
    with pytest.raises(SingularityError) as exc_info:
        green_function(x, x, field)
    assert exc_info.value.separation == 0.0


def test_hermitian_symmetry() -> None:
    field = FieldConfig(b=2.0, gauge_center=(0.3, -0.2))
    x = np.array([[0.1, 0.2, 0.3], [1.0, -1.0, 0.0]])
    y = np.array([[-0.5, 0.4, 0.9], [0.2, 0.3, -0.6]])
    forward = green_function(x, y, field)
    assert np.allclose(forward, np.conj(green_function(y, x, field)))


def test_free_split_sums_to_green(field: FieldConfig) -> None:
    x = np.array([0.0, 0.5, 0.1])
    y = np.array([0.3, -0.2, 0.4])
    principal, remainder = green_function_free_split(x, y, field)
    assert abs(principal + remainder - green_function(x, y, field)) < 1e-15


def test_gradient_matches_finite_difference() -> None:
    field = FieldConfig(b=1.0, gauge_center=(0.2, 0.1))
    x = np.array([0.1, 0.2, 0.3])
    y = np.array([0.7, -0.4, 1.1])
    g, grad = green_gradient(x, y, field)
    assert abs(g - green_function(x, y, field)) < 1e-14
    h = 1e-5
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        fd = (green_function(x, y + step, field) - green_function(x, y - step, field))
        fd /= 2 * h
        assert abs(grad[j] - fd) < 1e-8


def test_normal_derivative_is_covariant() -> None:
    field = FieldConfig(b=1.5)
    x = np.array([0.4, 0.0, -0.3])
    y = np.array([-0.2, 0.5, 0.6])
    normal = np.array([0.0, 0.6, 0.8])
    g, grad = green_gradient(x, y, field)
    expected = normal @ grad + 1j * (normal @ field.vector_potential(y)) * g
    assert abs(green_normal_derivative(x, y, normal, field) - expected) < 1e-12


def test_normal_derivative_classical_limit() -> None:
    field = FieldConfig(b=1e-12)
    x = np.array([0.4, 0.0, -0.3])
    y = np.array([-0.2, 0.5, 0.6])
    normal = np.array([0.0, 0.6, 0.8])
    d = x - y
    r = float(np.linalg.norm(d))
    classical = float(normal @ d) / (4 * math.pi * r**3)
    value = green_normal_derivative(x, y, normal, field)
    assert abs(value - classical) <= 1e-5 * abs(classical)


def test_axial_frequency_branch() -> None:
    assert axial_frequency(1.0, 0.0) == pytest.approx(1j)
    assert axial_frequency(1.0, 2.0) == pytest.approx(1.0)
    omega = axial_frequency(3.0, 1.0 - 0.5j)
    assert omega.imag >= 0
    assert omega**2 == pytest.approx(-2.0 - 0.5j)
    with pytest.raises(BranchError):
        axial_frequency(3.0, 3.0)


def test_axial_resolvent_kernel_at_zero_energy() -> None:
    value = axial_resolvent_kernel(4.0, 0.0, 0.0, 1.0)
    assert value == pytest.approx(math.exp(-2.0) / 4.0)
    with pytest.raises(DomainError):
        axial_resolvent_kernel(0.0, 1.0, 0.0, 1.0)


def test_r_kernel() -> None:
    assert r_kernel(0.5, 0.0, 2.0) == pytest.approx(0.5 * math.e)
    assert r_kernel(0.0, 1.0, -3.0) == pytest.approx(0.5)
