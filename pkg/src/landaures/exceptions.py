"""Custom exceptions for landaures."""

from typing import Optional


class LandauresError(Exception):
    """Base exception for all landaures errors."""

    pass


class DomainError(LandauresError, ValueError):
    """Raised when a function is called outside its validated argument range."""

    pass


class SingularityError(LandauresError):
    """
    Raised when a kernel is evaluated at (numerically) coincident points.

    Attributes:
        separation: The offending distance |x - y|.
        guard: The guard radius that was violated.
    """

    def __init__(self, separation: float, guard: float) -> None:
        super().__init__(
            f"kernel evaluated at separation {separation:.3e} below guard {guard:.1e}"
        )
        self.separation = separation
        self.guard = guard


class BranchError(LandauresError):
    """Raised when sqrt(z - Lambda_j) sits on a branch point."""

    pass


class MeshValidityError(LandauresError):
    """Raised when a surface mesh is not a closed, outward oriented surface."""

    pass


class QuadratureError(LandauresError):
    """Raised when a region or volume cannot be tessellated for quadrature."""

    pass


class TooCloseToSurfaceError(LandauresError):
    """Raised when a layer potential is requested too close to the surface."""

    pass


class SingularOperatorError(LandauresError):
    """
    Raised when a discretized boundary operator is (numerically) singular.

    Attributes:
        operator: Which operator failed (e.g. "single_layer").
        condition_number: Estimated 2-norm condition number.
        smallest_singular_value: Smallest singular value relative to the norm.
    """

    def __init__(
        self,
        *,
        operator: str,
        condition_number: float,
        smallest_singular_value: Optional[float] = None,
    ) -> None:
        super().__init__(f"{operator} is numerically singular")
        self.operator = operator
        self.condition_number = condition_number
        self.smallest_singular_value = smallest_singular_value

    def __str__(self) -> str:
        details = f"cond={self.condition_number:.3e}"
        if self.smallest_singular_value is not None:
            details += f", sigma_min/norm={self.smallest_singular_value:.3e}"
        return f"{self.operator} is numerically singular ({details})"

    def __repr__(self) -> str:
        return (
            f"SingularOperatorError(operator={self.operator!r}, "
            f"condition_number={self.condition_number!r}, "
            f"smallest_singular_value={self.smallest_singular_value!r})"
        )


class IllConditionedContourError(LandauresError):
    """Raised when a multiplicity contour passes too close to a characteristic value."""

    def __init__(self, sigma_min: float, threshold: float) -> None:
        super().__init__(
            f"sigma_min {sigma_min:.3e} on the contour is below {threshold:.1e}"
        )
        self.sigma_min = sigma_min
        self.threshold = threshold


class ConfigError(LandauresError):
    """Raised when an experiment configuration cannot be parsed or resolved."""

    pass


class SchemaMismatchError(LandauresError):
    """Raised when two run manifests cannot be compared."""

    pass
