import math
from fractions import Fraction

import numpy as np
import pytest

from landaures.exceptions import DomainError
from landaures.specfun import laguerre, laguerre_derivative, reg_lower_gamma


def exact_laguerre(q: int, t: float, alpha: int = 0) -> float:
    """Explicit sum in exact rational arithmetic."""
    x = Fraction(t)
    total = Fraction(0)
    for i in range(q + 1):
        coeff = Fraction(math.comb(q + alpha, q - i), math.factorial(i))
        total += (-1) ** i * coeff * x**i
    return float(total)


@pytest.mark.parametrize("q", [0, 1, 2, 5, 10, 20])
@pytest.mark.parametrize("t", [0.0, 0.5, 3.0, 10.0, 40.0])
def test_laguerre_matches_explicit_sum(q: int, t: float) -> None:
    value = laguerre(q, t)
    assert abs(value - exact_laguerre(q, t)) <= 1e-10 * math.exp(t / 2)


@pytest.mark.parametrize("alpha", [1, 3])
def test_generalized_laguerre_matches_explicit_sum(alpha: int) -> None:
    for q in (1, 4, 9):
        for t in (0.25, 2.0, 7.5):
            expected = exact_laguerre(q, t, alpha)
            assert abs(laguerre(q, t, alpha) - expected) <= 1e-10 * math.exp(t / 2)


def test_laguerre_low_degrees() -> None:
    t = np.linspace(0.0, 5.0, 11)
    assert np.allclose(laguerre(0, t), 1.0)
    assert np.allclose(laguerre(1, t, 0.5), 1.5 - t)
    assert laguerre(3, 0.0, 2.0) == pytest.approx(math.comb(5, 3))


def test_laguerre_keeps_shape() -> None:
    t = np.zeros((2, 3))
    assert np.shape(laguerre(4, t)) == (2, 3)
    assert isinstance(laguerre(4, 1.0), float)


def test_laguerre_domain_errors() -> None:
    with pytest.raises(DomainError):
        laguerre(201, 1.0)
    with pytest.raises(DomainError):
        laguerre(-1, 1.0)
    with pytest.raises(DomainError):
        laguerre(2, -0.5)
    with pytest.raises(DomainError):
        laguerre(2, 1.0, alpha=-1.0)
    with pytest.raises(DomainError):
        laguerre(2, [1.0, float("nan")])


def test_laguerre_derivative_matches_finite_difference() -> None:
    h = 1e-6
    for q, alpha in ((0, 0.0), (3, 0.0), (6, 2.0)):
        for t in (0.3, 1.7, 6.0):
            fd = (laguerre(q, t + h, alpha) - laguerre(q, t - h, alpha)) / (2 * h)
            assert laguerre_derivative(q, t, alpha) == pytest.approx(fd, abs=1e-6)


def test_reg_lower_gamma_closed_forms() -> None:
    assert reg_lower_gamma(1, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    # P(k+1, x) = 1 - e^{-x} sum_{j<=k} x^j / j!
    x = 2.5
    partial = sum(x**j / math.factorial(j) for j in range(4))
    assert reg_lower_gamma(4, x) == pytest.approx(1 - math.exp(-x) * partial, abs=1e-12)
    assert reg_lower_gamma(3, 0.0) == 0.0


def test_reg_lower_gamma_is_monotone_in_x() -> None:
    values = reg_lower_gamma(2.5, np.linspace(0.0, 20.0, 41))
    assert np.all(np.diff(values) >= 0)
    assert values[-1] <= 1.0


def test_reg_lower_gamma_domain_errors() -> None:
    with pytest.raises(DomainError):
        reg_lower_gamma(0.0, 1.0)
    with pytest.raises(DomainError):
        reg_lower_gamma(1.0, -1.0)
