"""
Scalar special functions shared by every other module.

Laguerre polynomials are evaluated with the three-term recurrence; the
regularized lower incomplete gamma function is delegated to scipy.
"""

from __future__ import annotations

from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from .exceptions import DomainError

MAX_LAGUERRE_DEGREE = 200

FloatOrArray = Union[float, NDArray[np.float64]]


def laguerre(q: int, t: ArrayLike, alpha: float = 0.0) -> FloatOrArray:
    """
    Evaluate the (generalized) Laguerre polynomial L_q^alpha(t).

    Uses the forward recurrence
    (k+1) L_{k+1} = (2k+1+alpha-t) L_k - (k+alpha) L_{k-1},
    which is stable for t >= 0.

    Args:
        q: Degree, 0 <= q <= 200.
        t: Nonnegative argument (scalar or array).
        alpha: Order of the generalized polynomial (alpha > -1).

    Returns:
        L_q^alpha(t) with the shape of ``t``.
    """
    if q < 0 or q > MAX_LAGUERRE_DEGREE:
        raise DomainError(f"laguerre degree {q} outside [0, {MAX_LAGUERRE_DEGREE}]")
    if alpha <= -1.0:
        raise DomainError(f"laguerre order alpha={alpha} must exceed -1")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise DomainError("laguerre argument must be finite and nonnegative")

    prev = np.ones_like(t_arr)
    if q == 0:
        return _unwrap(prev)
    cur = 1.0 + alpha - t_arr
    for k in range(1, q):
        nxt = ((2 * k + 1 + alpha - t_arr) * cur - (k + alpha) * prev) / (k + 1)
        prev, cur = cur, nxt
    return _unwrap(cur)


def laguerre_derivative(q: int, t: ArrayLike, alpha: float = 0.0) -> FloatOrArray:
    """d/dt L_q^alpha(t) = -L_{q-1}^{alpha+1}(t)."""
    if q == 0:
        return _unwrap(np.zeros_like(np.asarray(t, dtype=np.float64)))
    return -np.asarray(laguerre(q - 1, t, alpha + 1.0))  # type: ignore[no-any-return]


def reg_lower_gamma(a: float, x: ArrayLike) -> FloatOrArray:
    """
    Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).

    Raises:
        DomainError: if a <= 0 or x < 0.
    """
    if a <= 0:
        raise DomainError(f"reg_lower_gamma requires a > 0, got {a}")
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(x_arr < 0) or np.any(np.isnan(x_arr)):
        raise DomainError("reg_lower_gamma requires x >= 0")
    return _unwrap(special.gammainc(a, x_arr))


def _unwrap(values: NDArray[np.float64]) -> FloatOrArray:
    if values.ndim == 0:
        return float(values)
    return values
