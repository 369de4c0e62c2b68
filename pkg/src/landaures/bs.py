"""
Sign-definite obstacle perturbations and the Birman-Schwinger matrices.

The perturbation V (Dirichlet: V >= 0, Robin: V <= 0) is never formed as an
operator. It enters only through its quadratic form on explicit trial
functions f = phi_{j,k}(x_perp) chi_m(x3):

    v_form(f, g) = <H0 f, V H0 g>

reduced to volume integrals over K and boundary integrals over Sigma with
the boundary maps of ``landaures.bem``. Matrices below are linear in the
second slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Dict, List, Literal, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from numpy.polynomial import Legendre, Polynomial
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .bem import BoundaryMaps
from .exceptions import DomainError
from .green import axial_resolvent_kernel, r_kernel
from .landau import angular_mode, angular_mode_gradient
from .mesh import SurfaceMesh, volume_rule
from .models import FieldConfig, PanelQuadratureSpec, QuadratureSpec, SignReport
from .observability import AssemblyMetrics, record_solve

logger = structlog.get_logger()

ComplexArray = NDArray[np.complex128]
FloatArray = NDArray[np.float64]

BoundaryCondition = Literal["dirichlet", "robin"]
Realization = Literal["energy", "strong"]

TRUNCATION_WARNING = 1e-6
SIGN_TOLERANCE = 1e-8
AXIAL_GRID_POINTS = 401

# C^3 smoothstep 35t^4 - 84t^5 + 70t^6 - 20t^7
_SMOOTHSTEP = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])


@dataclass(frozen=True, eq=False)
class ObstacleProblem:
    """
    The obstacle K with its boundary condition.

    Neumann is Robin with gamma = 0. ``eps_sign`` is +1 for Dirichlet and
    -1 for Robin.
    """

    mesh: SurfaceMesh
    field: FieldConfig
    boundary_condition: BoundaryCondition = "dirichlet"
    gamma: Union[float, FloatArray] = 0.0

    def __post_init__(self) -> None:
        if self.boundary_condition == "dirichlet" and np.any(
            np.asarray(self.gamma) != 0
        ):
            raise DomainError("a Dirichlet obstacle carries no Robin parameter")

    @classmethod
    def neumann(cls, mesh: SurfaceMesh, field: FieldConfig) -> "ObstacleProblem":
        return cls(mesh, field, "robin", 0.0)

    @property
    def eps_sign(self) -> int:
        return 1 if self.boundary_condition == "dirichlet" else -1

    @property
    def gamma_panels(self) -> FloatArray:
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.ndim == 0:
            return np.full(self.mesh.n_panels, float(g))
        return g


@dataclass(frozen=True)
class AxialProfile:
    """
    Axial cutoff chi_3 equal to 1 on the shadow [lo, hi] of the obstacle and
    vanishing outside [lo - transition, hi + transition]. Profile m >= 1 is
    chi_3 times the Legendre polynomial P_m on the support window.
    """

    lo: float
    hi: float
    transition: float
    n_axial: int = 1

    @classmethod
    def for_mesh(
        cls,
        mesh: SurfaceMesh,
        field: FieldConfig,
        *,
        transition: Optional[float] = None,
        n_axial: int = 1,
    ) -> "AxialProfile":
        lo, hi = mesh.axial_extent
        delta = transition or max(0.5 * (hi - lo), 1.0 / math.sqrt(field.b))
        return cls(lo, hi, delta, n_axial)

    @property
    def support(self) -> Tuple[float, float]:
        return self.lo - self.transition, self.hi + self.transition

    def cutoff(self, x3: ArrayLike, derivative: int = 0) -> FloatArray:
        """chi_3 or one of its first three derivatives."""
        z = np.asarray(x3, dtype=np.float64)
        out = np.zeros_like(z)
        if derivative == 0:
            out[(z >= self.lo) & (z <= self.hi)] = 1.0
        step = _SMOOTHSTEP.deriv(derivative) if derivative else _SMOOTHSTEP
        scale = self.transition**-derivative
        left = (z > self.lo - self.transition) & (z < self.lo)
        right = (z > self.hi) & (z < self.hi + self.transition)
        rise = (z[left] - self.lo + self.transition) / self.transition
        out[left] = scale * step(rise)
        out[right] = (
            (-1) ** derivative
            * scale
            * step((self.hi + self.transition - z[right]) / self.transition)
        )
        return out

    def _legendre(self, m: int) -> Tuple[Legendre, float, float]:
        a, b = self.support
        return Legendre.basis(m), 0.5 * (a + b), 0.5 * (b - a)

    def values(self, x3: ArrayLike, m: int, derivative: int = 0) -> FloatArray:
        """chi_m and its derivatives up to order two."""
        if m == 0:
            return self.cutoff(x3, derivative)
        z = np.asarray(x3, dtype=np.float64)
        poly, mid, half = self._legendre(m)
        xi = (z - mid) / half

        def p(d: int) -> FloatArray:
            value: FloatArray = poly.deriv(d)(xi) / half**d if d else poly(xi)
            return value

        if derivative == 0:
            return self.cutoff(z) * p(0)
        if derivative == 1:
            return self.cutoff(z, 1) * p(0) + self.cutoff(z) * p(1)
        return (
            self.cutoff(z, 2) * p(0)
            + 2.0 * self.cutoff(z, 1) * p(1)
            + self.cutoff(z) * p(2)
        )

    def grid(self, n: int = AXIAL_GRID_POINTS) -> Tuple[FloatArray, FloatArray]:
        """Trapezoid nodes and weights on the support."""
        a, b = self.support
        nodes = np.linspace(a, b, n)
        w = np.full(n, (b - a) / (n - 1))
        w[[0, -1]] *= 0.5
        return nodes, w

    def gram(self, n: int = AXIAL_GRID_POINTS) -> FloatArray:
        """<chi_m, chi_m'> on the axial grid."""
        nodes, w = self.grid(n)
        C = np.stack([self.values(nodes, m) for m in range(self.n_axial)], axis=-1)
        return C.T @ (w[:, None] * C)  # type: ignore[no-any-return]


class TrialEntry(NamedTuple):
    level: int
    angular: int
    axial: int


@dataclass(frozen=True)
class TrialSpace:
    """Trial functions phi_{j,k} (x) chi_m ordered (level, angular, axial)."""

    field: FieldConfig
    profile: AxialProfile
    levels: Tuple[int, ...]
    n_modes: int

    def __post_init__(self) -> None:
        try:
            linalg.cholesky(self.profile.gram(), lower=True)
        except linalg.LinAlgError as e:
            raise DomainError("axial profiles are linearly dependent") from e

    @classmethod
    def build(
        cls,
        problem: ObstacleProblem,
        levels: Sequence[int],
        n_modes: int,
        *,
        n_axial: int = 1,
        transition: Optional[float] = None,
    ) -> "TrialSpace":
        if n_modes < 1 or not levels:
            raise DomainError("trial space needs at least one level and one mode")
        profile = AxialProfile.for_mesh(
            problem.mesh, problem.field, transition=transition, n_axial=n_axial
        )
        return cls(problem.field, profile, tuple(sorted(set(levels))), n_modes)

    def with_levels(self, levels: Sequence[int]) -> "TrialSpace":
        kept = tuple(sorted(set(levels)))
        return TrialSpace(self.field, self.profile, kept, self.n_modes)

    @property
    def entries(self) -> List[TrialEntry]:
        return [
            TrialEntry(j, k, m)
            for j in self.levels
            for k in range(self.n_modes)
            for m in range(self.profile.n_axial)
        ]

    @property
    def size(self) -> int:
        return len(self.levels) * self.n_modes * self.profile.n_axial

    def indices(self, level: int, axial: Optional[int] = None) -> NDArray[np.int64]:
        return np.array(
            [
                i
                for i, e in enumerate(self.entries)
                if e.level == level and (axial is None or e.axial == axial)
            ],
            dtype=np.int64,
        )

    def gram(self) -> FloatArray:
        """Full L2 Gram: planar modes are orthonormal, axial Gram per block."""
        blocks = len(self.levels) * self.n_modes
        full: FloatArray = np.kron(np.eye(blocks), self.profile.gram())
        return full

    def evaluate(
        self, points: ArrayLike
    ) -> Tuple[ComplexArray, ComplexArray, ComplexArray]:
        """
        Values, magnetic gradients (grad - iA) and H0 images of all entries.

        Returns arrays of shape (P, n), (P, n, 3) and (P, n).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n_pts = pts.shape[0]
        A = self.field.vector_potential(pts)
        x3 = pts[:, 2]
        chi = [
            [self.profile.values(x3, m, d) for d in range(3)]
            for m in range(self.profile.n_axial)
        ]
        values = np.empty((n_pts, self.size), dtype=np.complex128)
        grads = np.empty((n_pts, self.size, 3), dtype=np.complex128)
        h0 = np.empty((n_pts, self.size), dtype=np.complex128)
        i = 0
        for j in self.levels:
            energy = self.field.landau_level(j)
            for k in range(self.n_modes):
                phi = angular_mode(j, k, self.field, pts)
                g1, g2 = angular_mode_gradient(j, k, self.field, pts)
                d1 = g1 - 1j * A[:, 0] * phi
                d2 = g2 - 1j * A[:, 1] * phi
                for m in range(self.profile.n_axial):
                    c0, c1, c2 = chi[m]
                    values[:, i] = phi * c0
                    grads[:, i, 0] = d1 * c0
                    grads[:, i, 1] = d2 * c0
                    grads[:, i, 2] = phi * c1
                    h0[:, i] = energy * phi * c0 - phi * c2
                    i += 1
        return values, grads, h0


@dataclass(frozen=True, eq=False)
class TrialFunction:
    """A linear combination of the entries of a trial space."""

    space: TrialSpace
    coefficients: ComplexArray

    @classmethod
    def basis(cls, space: TrialSpace, index: int) -> "TrialFunction":
        c = np.zeros(space.size, dtype=np.complex128)
        c[index] = 1.0
        return cls(space, c)

    def __mul__(self, scalar: complex) -> "TrialFunction":
        return TrialFunction(self.space, scalar * self.coefficients)

    __rmul__ = __mul__

    def __add__(self, other: "TrialFunction") -> "TrialFunction":
        if other.space != self.space:
            raise DomainError("trial functions live in different trial spaces")
        return TrialFunction(self.space, self.coefficients + other.coefficients)


@dataclass(eq=False)
class PerturbationForm:
    """
    The quadratic form of V for one obstacle problem, with the boundary
    maps and the volume rule cached.
    """

    problem: ObstacleProblem
    realization: Realization = "energy"
    quad: Optional[QuadratureSpec] = None
    panels: Optional[PanelQuadratureSpec] = None
    threads: int = 1
    volume_order: int = 6
    _maps: Optional[BoundaryMaps] = dataclass_field(default=None, repr=False)
    _volume: Optional[Tuple[FloatArray, FloatArray]] = dataclass_field(
        default=None, repr=False
    )
    _grams: Dict[TrialSpace, ComplexArray] = dataclass_field(
        default_factory=dict, repr=False
    )

    @property
    def maps(self) -> BoundaryMaps:
        if self._maps is None:
            self._maps = BoundaryMaps.build(
                self.problem.mesh,
                self.problem.field,
                self.problem.gamma_panels,
                self.quad,
                panels=self.panels,
                threads=self.threads,
            )
        return self._maps

    @property
    def volume(self) -> Tuple[FloatArray, FloatArray]:
        if self._volume is None:
            self._volume = volume_rule(self.problem.mesh, self.volume_order)
        return self._volume

    def gram(self, space: TrialSpace) -> ComplexArray:
        """Hermitian matrix v_form(e_a, e_b) over the trial entries."""
        if space in self._grams:
            return self._grams[space]
        with AssemblyMetrics(f"v_form_{self.problem.boundary_condition}"):
            V = self._assemble_gram(space)
        self._grams[space] = V
        return V

    def _assemble_gram(self, space: TrialSpace) -> ComplexArray:
        mesh = self.problem.mesh
        areas = mesh.areas
        trace, grad_s, _ = space.evaluate(mesh.centroids)
        normal = np.einsum("pi,pni->pn", mesh.normals, grad_s)
        if self.problem.boundary_condition == "robin":
            robin = normal + self.problem.gamma_panels[:, None] * trace
            diff = self.maps.robin_difference()
            V = -robin.conj().T @ (areas[:, None] * (diff @ robin))
        else:
            dn = self.maps.dirichlet_robin("exterior").matrix
            pts, w = self.volume
            values, grads, h0 = space.evaluate(pts)
            if self.realization == "energy":
                g = grads * np.sqrt(w)[:, None, None]
                volume = sum(g[:, :, i].conj().T @ g[:, :, i] for i in range(3))
                V = volume - trace.conj().T @ (areas[:, None] * (dn @ trace))
            else:
                volume = values.conj().T @ (w[:, None] * h0)
                V = volume + trace.conj().T @ (areas[:, None] * (normal - dn @ trace))
        return 0.5 * (V + V.conj().T)  # type: ignore[no-any-return]


def v_form(form: PerturbationForm, phi: TrialFunction, psi: TrialFunction) -> complex:
    """<H0 phi, V H0 psi>, conjugate-linear in phi and linear in psi."""
    if phi.space != psi.space:
        raise DomainError("trial functions live in different trial spaces")
    V = form.gram(phi.space)
    return complex(phi.coefficients.conj() @ V @ psi.coefficients)


def graded_eigenvalues(matrix: ArrayLike, max_sweeps: int = 60) -> FloatArray:
    """
    Eigenvalues (descending) of a Hermitian positive semidefinite matrix with
    relative accuracy for graded spectra: one-sided Jacobi on the Cholesky
    factor. Falls back to eigvalsh when the matrix is not numerically
    positive definite.
    """
    H = np.asarray(matrix, dtype=np.complex128)
    H = 0.5 * (H + H.conj().T)
    record_solve("eigen")
    try:
        L = linalg.cholesky(H, lower=True)
    except linalg.LinAlgError:
        return np.sort(linalg.eigvalsh(H))[::-1]  # type: ignore[no-any-return]
    G = L.conj().T.copy()
    n = G.shape[1]
    tol = n * np.finfo(float).eps
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = float(np.vdot(G[:, p], G[:, p]).real)
                beta = float(np.vdot(G[:, q], G[:, q]).real)
                gamma = complex(np.vdot(G[:, p], G[:, q]))
                g = abs(gamma)
                if g <= tol * math.sqrt(alpha * beta) or g == 0.0:
                    continue
                rotated = True
                phase = gamma / g
                zeta = (beta - alpha) / (2.0 * g)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta**2))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                gp = G[:, p].copy()
                gq = G[:, q] / phase
                G[:, p] = c * gp - s * gq
                G[:, q] = s * gp + c * gq
        if not rotated:
            break
    return np.sort(np.sum(np.abs(G) ** 2, axis=0))[::-1]  # type: ignore[no-any-return]


def t_q_matrix(
    form: PerturbationForm,
    q: int,
    n_modes: int,
    *,
    transition: Optional[float] = None,
) -> ComplexArray:
    """
    Matrix of T_q in the angular basis phi_{q,0..n_modes-1}:
    (eps/2) v_form(phi_{q,j} chi_3, phi_{q,k} chi_3).
    """
    space = TrialSpace.build(form.problem, [q], n_modes, transition=transition)
    T = 0.5 * form.problem.eps_sign * form.gram(space)
    logger.info("t_q_assembled", q=q, n_modes=n_modes, norm=float(np.linalg.norm(T, 2)))
    return T  # type: ignore[no-any-return]


def level_truncation_bound(
    field: FieldConfig, q: int, k: complex, j_max: int, axial_extent: float
) -> float:
    """exp(-sqrt(Lambda_{J+1} - Lambda_q - |k|^2) d(K)) for the dropped levels."""
    gap = field.landau_level(j_max + 1) - field.landau_level(q) - abs(k) ** 2
    return math.exp(-math.sqrt(max(gap, 0.0)) * axial_extent)


@dataclass(frozen=True, eq=False)
class BirmanSchwingerMatrix:
    """Galerkin matrix of A_q(ik) on the multi-level trial space."""

    matrix: ComplexArray
    space: TrialSpace
    q: int
    k: complex
    truncation_bound: float

    @property
    def q_flat(self) -> NDArray[np.int64]:
        """Indices of the entries phi_{q,k} chi_3."""
        return self.space.indices(self.q, axial=0)


def _axial_kernel(
    field: FieldConfig, q: int, j: int, k: complex, dist: FloatArray
) -> ComplexArray:
    ik = 1j * complex(k)
    if j == q:
        lam = field.landau_level(q)
        return r_kernel(ik, dist, 0.0) + ik * np.exp(-math.sqrt(lam) * dist) / (
            2.0 * math.sqrt(lam)
        )
    lam_j = field.landau_level(j)
    z = field.landau_level(q) + complex(k) ** 2
    return -ik * (  # type: ignore[no-any-return]
        axial_resolvent_kernel(lam_j, z, dist, 0.0)
        - axial_resolvent_kernel(lam_j, 0.0, dist, 0.0)
    )


def axial_sandwich(
    space: TrialSpace, q: int, k: complex
) -> ComplexArray:
    """
    Block-diagonal Y(k) = G^{-1} <phi chi_m, chi_3 K chi_3 phi chi_m'> G^{-1}
    with K the level kernel of H0^{-1} X H0^{-1}.
    """
    profile = space.profile
    nodes, w = profile.grid()
    dist = np.abs(nodes[:, None] - nodes[None, :])
    chi3 = profile.cutoff(nodes)
    C = np.stack(
        [profile.values(nodes, m) * chi3 for m in range(profile.n_axial)], axis=-1
    )
    G = profile.gram()
    blocks = []
    for j in space.levels:
        K = _axial_kernel(space.field, q, j, k, dist)
        Y = C.T @ (w[:, None] * K * w[None, :]) @ C
        inner = linalg.solve(G, linalg.solve(G, Y.T, assume_a="pos").T, assume_a="pos")
        blocks.append(np.kron(np.eye(space.n_modes), inner))
    return linalg.block_diag(*blocks)  # type: ignore[no-any-return]


def assemble_a_q(
    form: PerturbationForm,
    q: int,
    k: complex,
    trial: TrialSpace,
    j_max: Optional[int] = None,
) -> BirmanSchwingerMatrix:
    """
    Galerkin matrix of A_q(ik) = eps Y(k) V on the levels 0..j_max.

    Raises:
        DomainError: if |k| is outside the single-level window sqrt(2b) or
            j_max < q + 2.
        BranchError: if z = Lambda_q + k^2 hits another threshold.
    """
    field = form.problem.field
    j_max = q + 8 if j_max is None else j_max
    if j_max < q + 2:
        raise DomainError(f"j_max must be at least q + 2 = {q + 2}")
    if abs(k) >= math.sqrt(2.0 * field.b):
        raise DomainError("|k| must stay below sqrt(2b)")
    space = trial.with_levels(range(j_max + 1))
    lo, hi = form.problem.mesh.axial_extent
    bound = level_truncation_bound(field, q, k, j_max, hi - lo)
    if bound > TRUNCATION_WARNING:
        logger.warning("level_truncation", bound=bound, j_max=j_max, q=q)
    V = form.gram(space)
    Y = axial_sandwich(space, q, k)
    A = form.problem.eps_sign * (Y @ V)
    return BirmanSchwingerMatrix(A, space, q, complex(k), bound)


def sign_check(
    form: PerturbationForm, trial: TrialSpace, tolerance: float = SIGN_TOLERANCE
) -> SignReport:
    """Extreme eigenvalues of the v_form Gram against the expected sign."""
    eig = linalg.eigvalsh(form.gram(trial))
    record_solve("eigen")
    scale = float(np.max(np.abs(eig))) if eig.size else 0.0
    bc = form.problem.boundary_condition
    if bc == "dirichlet":
        passed = bool(eig.min() >= -tolerance * scale)
    else:
        passed = bool(eig.max() <= tolerance * scale)
        if not passed:
            logger.warning("robin_sign_violation", max_eigenvalue=float(eig.max()))
    return SignReport(
        boundary_condition=bc,
        dimension=int(eig.size),
        min_eigenvalue=float(eig.min()),
        max_eigenvalue=float(eig.max()),
        scale=scale,
        tolerance=tolerance,
        passed=passed,
    )


def cd1_diagnostic(
    form: PerturbationForm,
    q: int,
    trial: TrialSpace,
    j_max: Optional[int] = None,
    h: float = 1e-4,
) -> float:
    """
    Condition number of I - eps A_q'(0) Pi_q, with the derivative taken in
    ik by central differences and Pi_q the selector of the q-flat entries.
    Reported only.
    """
    plus = assemble_a_q(form, q, -1j * h, trial, j_max)
    minus = assemble_a_q(form, q, 1j * h, trial, j_max)
    deriv = (plus.matrix - minus.matrix) / (2.0 * h)
    selector = np.zeros(plus.space.size)
    selector[plus.q_flat] = 1.0
    M = np.eye(plus.space.size) - form.problem.eps_sign * deriv * selector[None, :]
    cond = float(np.linalg.cond(M))
    logger.info("cd1_diagnostic", q=q, condition_number=cond)
    return cond
