"""
Magnetic heat kernel, the Green function G0 of H0^{-1} and its derivatives,
and the 1D axial kernels used by the Birman-Schwinger operators.

The Green function is evaluated in the proper-time variable u = b t:

    G0(x, y) = exp(-i b/2 x^y) I(x, y),
    I(x, y) = b^{1/2} (4 pi)^{-3/2} int_0^inf f(u) du,
    f(u) = exp(-(b/4)[d3^2/u + coth(u) rho^2]) / (u^{1/2} sinh u).

The integral is split at ``QuadratureSpec.split_point``. On the compact leg
the free-space part u^{-3/2} exp(-a/u) (a = b|x-y|^2/4) is integrated in
closed form and only the bounded remainder is left to Gauss-Legendre
quadrature in s = sqrt(u). The tail uses Gauss-Laguerre in u - split.
"""

from __future__ import annotations

import cmath
import math
from typing import Optional, Tuple

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from scipy.special import erfc

from .exceptions import BranchError, DomainError, SingularityError
from .models import FieldConfig, QuadratureSpec
from .observability import record_kernel_evaluations
from .quadrature import gauss_laguerre, gauss_legendre

logger = structlog.get_logger()

SINGULARITY_GUARD = 1e-10
SERIES_SWITCH = 0.1
BRANCH_TOLERANCE = 1e-14

_PREFACTOR = (4.0 * math.pi) ** -1.5
_DEFAULT_QUAD = QuadratureSpec()

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]


def _coth_minus_inv(u: FloatArray) -> FloatArray:
    """coth(u) - 1/u, accurate for small u."""
    out = np.empty_like(u)
    small = u < SERIES_SWITCH
    us = u[small]
    u2 = us * us
    out[small] = us * (1 / 3 + u2 * (-1 / 45 + u2 * (2 / 945 - u2 / 4725)))
    ul = u[~small]
    out[~small] = 1.0 / np.tanh(ul) - 1.0 / ul
    return out


def _log_sinhc(u: FloatArray) -> FloatArray:
    """log(sinh(u) / u), accurate for small u."""
    out = np.empty_like(u)
    small = u < SERIES_SWITCH
    u2 = u[small] ** 2
    out[small] = u2 * (1 / 6 + u2 * (-1 / 180 + u2 * (1 / 2835 - u2 / 37800)))
    ul = u[~small]
    out[~small] = ul + np.log(-np.expm1(-2.0 * ul)) - math.log(2.0) - np.log(ul)
    return out


def _log_cosh(u: FloatArray) -> FloatArray:
    return np.log1p(2.0 * np.sinh(0.5 * u) ** 2)  # type: ignore[no-any-return]


def _separation(
    x: ArrayLike, y: ArrayLike
) -> Tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    d = xa - ya
    rho2 = d[..., 0] ** 2 + d[..., 1] ** 2
    d3 = d[..., 2]
    r = np.sqrt(rho2 + d3**2)
    if r.size and float(np.min(r)) < SINGULARITY_GUARD:
        raise SingularityError(separation=float(np.min(r)), guard=SINGULARITY_GUARD)
    return d, rho2, d3, r


def _compact_nodes(quad: QuadratureSpec) -> Tuple[FloatArray, FloatArray]:
    """Nodes u = s^2 on (0, split] with the Jacobian 2s folded into the weights."""
    s, ws = gauss_legendre(quad.n_compact, 0.0, math.sqrt(quad.split_point))
    return s * s, 2.0 * s * ws


def _tail_nodes(quad: QuadratureSpec) -> Tuple[FloatArray, FloatArray]:
    t, wt = gauss_laguerre(quad.n_tail)
    keep = t <= quad.tail_cutoff
    return quad.split_point + t[keep], wt[keep]


def _tail_factor(u: FloatArray) -> FloatArray:
    """e^{u - split} / (u^{1/2} sinh u), folded with the Laguerre weight e^{-t}."""
    factor: FloatArray = 2.0 * np.exp(-u) / (np.sqrt(u) * -np.expm1(-2.0 * u))
    return factor


def heat_kernel(
    t: float, x: ArrayLike, y: ArrayLike, field: FieldConfig
) -> ComplexArray:
    """
    Magnetic heat kernel e^{-t H0}(x, y) in the symmetric gauge, evaluated in
    the log domain so that large b t does not overflow.
    """
    if t <= 0:
        raise DomainError(f"heat_kernel requires t > 0, got {t}")
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    d = xa - ya
    rho2 = d[..., 0] ** 2 + d[..., 1] ** 2
    b = field.b
    bt = b * t
    log_sinh = bt + math.log(-math.expm1(-2.0 * bt)) - math.log(2.0)
    coth = 1.0 / math.tanh(bt)
    log_mod = (
        -0.5 * math.log(4.0 * math.pi * t)
        + math.log(b / (4.0 * math.pi))
        - log_sinh
        - d[..., 2] ** 2 / (4.0 * t)
        - 0.25 * b * coth * rho2
    )
    phase = np.exp(-0.5j * b * field.wedge(xa, ya))
    return np.exp(log_mod) * phase  # type: ignore[no-any-return]


def green_integral(
    x: ArrayLike,
    y: ArrayLike,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """
    The real integral I(x, y) split into its three legs.

    Returns:
        (free, compact, tail): the closed-form free-space part
        erfc(sqrt a)/(4 pi r), the quadrature remainder on the compact leg and
        the tail leg. I = free + compact + tail.
    """
    quad = quad or _DEFAULT_QUAD
    _, rho2, d3, r = _separation(x, y)
    b = field.b
    a = 0.25 * b * r * r
    sqrt_b = math.sqrt(b)
    # int_0^split u^{-3/2} e^{-a/u} du; erfc(sqrt a)/(4 pi r) at split = 1
    free = sqrt_b * _PREFACTOR * np.sqrt(math.pi / a)
    free = free * erfc(np.sqrt(a / quad.split_point))

    u, wu = _compact_nodes(quad)
    a_ = a[..., None]
    brho = 0.25 * b * rho2[..., None]
    expo = -_log_sinhc(u) - brho * _coth_minus_inv(u)
    compact_vals = u**-1.5 * np.exp(-a_ / u) * np.expm1(expo)
    compact = sqrt_b * _PREFACTOR * np.sum(compact_vals * wu, axis=-1)

    ut, wt = _tail_nodes(quad)
    tail_exp = np.exp(
        -0.25 * b * (d3[..., None] ** 2 / ut + rho2[..., None] / np.tanh(ut))
        + (ut - quad.split_point)
    )
    tail_vals = _tail_factor(ut) * tail_exp
    tail = sqrt_b * _PREFACTOR * np.sum(tail_vals * wt, axis=-1)
    record_kernel_evaluations("green", int(np.size(r)))
    return free, compact, tail


def green_function_free_split(
    x: ArrayLike,
    y: ArrayLike,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
) -> Tuple[ComplexArray, ComplexArray]:
    """
    G0 as (principal, remainder): the phased free-space term
    e^{-i b/2 x^y} erfc(sqrt a)/(4 pi r) and the bounded rest.
    """
    free, compact, tail = green_integral(x, y, field, quad)
    phase = np.exp(-0.5j * field.b * field.wedge(x, y))
    return phase * free, phase * (compact + tail)


def green_function(
    x: ArrayLike,
    y: ArrayLike,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
) -> ComplexArray:
    """
    Green function G0(x, y) of H0 = (i grad + A)^2 at energy zero.

    Raises:
        SingularityError: if |x - y| < 1e-10.
    """
    free, compact, tail = green_integral(x, y, field, quad)
    phase = np.exp(-0.5j * field.b * field.wedge(x, y))
    return phase * (free + compact + tail)  # type: ignore[no-any-return]


def green_gradient_integrals(
    x: ArrayLike,
    y: ArrayLike,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
) -> Tuple[FloatArray, FloatArray]:
    """
    (I, grad_y I) for the real integral I(x, y); grad has a trailing axis 3.

    d/dy_j I = (b/2)(x_j - y_j) b^{1/2} (4 pi)^{-3/2} int f(u) c_j(u) du with
    c_1 = c_2 = coth u and c_3 = 1/u. The free part u^{-5/2} e^{-a/u} and the
    first-order remainder -(b rho^2/12) u^{-3/2} e^{-a/u} are integrated in
    closed form on the compact leg.
    """
    quad = quad or _DEFAULT_QUAD
    d, rho2, d3, r = _separation(x, y)
    b = field.b
    sqrt_b = math.sqrt(b)
    split = quad.split_point
    a = 0.25 * b * r * r
    sqrt_a = np.sqrt(a)

    free_i = sqrt_b * _PREFACTOR * np.sqrt(math.pi / a) * erfc(np.sqrt(a / split))
    # int_0^split u^{-5/2} e^{-a/u} du = Gamma(3/2, a/split) / a^{3/2}
    a_s = a / split
    upper_gamma = 0.5 * math.sqrt(math.pi) * erfc(np.sqrt(a_s))
    upper_gamma = upper_gamma + np.sqrt(a_s) * np.exp(-a_s)
    free_g = upper_gamma / (a * sqrt_a)
    first_order = -(b * rho2 / 12.0) * np.sqrt(math.pi / a) * erfc(np.sqrt(a_s))

    u, wu = _compact_nodes(quad)
    a_ = a[..., None]
    brho = 0.25 * b * rho2[..., None]
    ls = _log_sinhc(u)
    cm = brho * _coth_minus_inv(u)
    gauss = np.exp(-a_ / u)
    value_rem = np.sum(u**-1.5 * gauss * np.expm1(-ls - cm) * wu, axis=-1)
    lin = (b * rho2[..., None] / 12.0) * u
    log_ucoth = _log_cosh(u) - ls
    planar_rem = np.sum(
        u**-2.5 * gauss * (np.expm1(log_ucoth - ls - cm) + lin) * wu, axis=-1
    )
    axial_rem = np.sum(u**-2.5 * gauss * (np.expm1(-ls - cm) + lin) * wu, axis=-1)

    ut, wt = _tail_nodes(quad)
    tail_base = _tail_factor(ut) * np.exp(
        -0.25 * b * (d3[..., None] ** 2 / ut + rho2[..., None] / np.tanh(ut))
        + (ut - split)
    )
    value_tail = np.sum(tail_base * wt, axis=-1)
    planar_tail = np.sum(tail_base / np.tanh(ut) * wt, axis=-1)
    axial_tail = np.sum(tail_base / ut * wt, axis=-1)

    scale = sqrt_b * _PREFACTOR
    value = free_i + scale * (value_rem + value_tail)
    planar = free_g + first_order + planar_rem + planar_tail
    axial = free_g + first_order + axial_rem + axial_tail
    grad = np.empty(d.shape, dtype=np.float64)
    grad[..., 0] = 0.5 * b * d[..., 0] * scale * planar
    grad[..., 1] = 0.5 * b * d[..., 1] * scale * planar
    grad[..., 2] = 0.5 * b * d[..., 2] * scale * axial
    record_kernel_evaluations("green_gradient", int(np.size(r)))
    return value, grad


def green_gradient(
    x: ArrayLike,
    y: ArrayLike,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
) -> Tuple[ComplexArray, ComplexArray]:
    """(G0, grad_y G0) including the derivative of the gauge phase."""
    value, grad_i = green_gradient_integrals(x, y, field, quad)
    xa = np.asarray(x, dtype=np.float64)
    phase = np.exp(-0.5j * field.b * field.wedge(x, y))
    # grad_y of x^y is (-x2', x1', 0) relative to the gauge center
    shape = np.broadcast(xa, np.asarray(y)).shape
    rel = field.planar_offset(np.broadcast_to(xa, shape))
    dwedge = np.zeros(grad_i.shape, dtype=np.float64)
    dwedge[..., 0] = -rel[..., 1]
    dwedge[..., 1] = rel[..., 0]
    g = phase * value
    grad = phase[..., None] * grad_i - 0.5j * field.b * dwedge * g[..., None]
    return g, grad


def green_normal_derivative(
    x: ArrayLike,
    y: ArrayLike,
    normal: ArrayLike,
    field: FieldConfig,
    quad: Optional[QuadratureSpec] = None,
) -> ComplexArray:
    """
    Covariant normal derivative nu . (grad_y + i A(y)) G0(x, y), the kernel of
    the magnetic double layer. ``normal`` is the unit normal at y.

    Equals exp(-i b/2 x^y) [nu . grad_y I + i nu . (A(y) - A(x)) I].
    """
    value, grad_i = green_gradient_integrals(x, y, field, quad)
    nu = np.asarray(normal, dtype=np.float64)
    shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
    ax = field.vector_potential(np.broadcast_to(np.asarray(x, dtype=float), shape))
    ay = field.vector_potential(np.broadcast_to(np.asarray(y, dtype=float), shape))
    phase = np.exp(-0.5j * field.b * field.wedge(x, y))
    gauge = 1j * np.sum(nu * (ay - ax), axis=-1) * value
    covariant = np.sum(nu * grad_i, axis=-1) + gauge
    return phase * covariant  # type: ignore[no-any-return]


def near_diagonal_principal(
    x: ArrayLike, y: ArrayLike, field: FieldConfig
) -> ComplexArray:
    """Principal part exp(-i b/2 x^y) / (4 pi |x - y|)."""
    _, _, _, r = _separation(x, y)
    phase = np.exp(-0.5j * field.b * field.wedge(x, y))
    return phase / (4.0 * math.pi * r)  # type: ignore[no-any-return]


def axial_frequency(level_energy: float, z: complex) -> complex:
    """omega = sqrt(z - Lambda) on the sheet Im omega >= 0."""
    delta = complex(z) - level_energy
    if abs(delta) <= BRANCH_TOLERANCE * max(1.0, abs(level_energy)):
        raise BranchError(f"z = {z} coincides with the threshold {level_energy}")
    omega = cmath.sqrt(delta)
    if omega.imag < 0 or (omega.imag == 0 and omega.real < 0):
        omega = -omega
    return omega


def axial_resolvent_kernel(
    level_energy: float, z: complex, x3: ArrayLike, y3: ArrayLike
) -> ComplexArray:
    """
    Kernel of (-d^2/dx3^2 + Lambda - z)^{-1}: i e^{i omega |x3 - y3|} / (2 omega),
    which is e^{-sqrt(Lambda)|x3 - y3|} / (2 sqrt(Lambda)) at z = 0.
    """
    if level_energy <= 0:
        raise DomainError("level energy must be positive")
    omega = axial_frequency(level_energy, z)
    dist = np.abs(np.asarray(x3, dtype=np.float64) - np.asarray(y3, dtype=np.float64))
    return 1j * np.exp(1j * omega * dist) / (2.0 * omega)  # type: ignore[no-any-return]


def r_kernel(z: complex, x3: ArrayLike, y3: ArrayLike) -> ComplexArray:
    """Kernel 1/2 e^{z |x3 - y3|} of the axial operator r(z)."""
    dist = np.abs(np.asarray(x3, dtype=np.float64) - np.asarray(y3, dtype=np.float64))
    return 0.5 * np.exp(complex(z) * dist)  # type: ignore[no-any-return]
