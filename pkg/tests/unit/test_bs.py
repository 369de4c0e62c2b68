import numpy as np
import pytest
from scipy import linalg

from landaures.bs import (
    AxialProfile,
    ObstacleProblem,
    PerturbationForm,
    TrialFunction,
    TrialSpace,
    assemble_a_q,
    cd1_diagnostic,
    graded_eigenvalues,
    level_truncation_bound,
    sign_check,
    t_q_matrix,
    v_form,
)
from landaures.exceptions import DomainError
from landaures.mesh import SurfaceMesh, icosphere
from landaures.models import FieldConfig

FIELD = FieldConfig(b=1.0)


@pytest.fixture(scope="module")
def dirichlet_form(unit_sphere: SurfaceMesh) -> PerturbationForm:
    return PerturbationForm(ObstacleProblem(unit_sphere, FIELD))


@pytest.fixture(scope="module")
def neumann_form(unit_sphere: SurfaceMesh) -> PerturbationForm:
    return PerturbationForm(ObstacleProblem.neumann(unit_sphere, FIELD))


def make_space(form: PerturbationForm, levels=(0,), n_modes: int = 3) -> TrialSpace:
    return TrialSpace.build(form.problem, levels, n_modes)


def test_obstacle_problem_signs(unit_sphere: SurfaceMesh) -> None:
    assert ObstacleProblem(unit_sphere, FIELD).eps_sign == 1
    robin = ObstacleProblem(unit_sphere, FIELD, "robin", 0.4)
    assert robin.eps_sign == -1
    assert np.all(robin.gamma_panels == 0.4)
    assert ObstacleProblem.neumann(unit_sphere, FIELD).boundary_condition == "robin"
    with pytest.raises(DomainError):
        ObstacleProblem(unit_sphere, FIELD, "dirichlet", 0.4)


def test_axial_profile_cutoff() -> None:
    profile = AxialProfile(lo=-1.0, hi=1.0, transition=0.5)
    assert profile.support == (-1.5, 1.5)
    z = np.array([-2.0, -1.5, -1.0, 0.0, 1.0, 1.5, 2.0])
    assert np.allclose(profile.cutoff(z), [0, 0, 1, 1, 1, 0, 0])
    t = np.array([-1.3, -1.1, 1.2, 1.45])
    h = 1e-6
    fd = (profile.cutoff(t + h) - profile.cutoff(t - h)) / (2 * h)
    assert np.allclose(profile.cutoff(t, 1), fd, atol=1e-6)
    fd2 = (profile.cutoff(t + h, 1) - profile.cutoff(t - h, 1)) / (2 * h)
    assert np.allclose(profile.cutoff(t, 2), fd2, atol=1e-5)


def test_axial_profile_values_derivative() -> None:
    profile = AxialProfile(lo=-0.5, hi=0.5, transition=1.0, n_axial=3)
    t = np.array([-1.2, -0.3, 0.4, 1.1])
    h = 1e-6
    for m in range(3):
        fd = (profile.values(t + h, m) - profile.values(t - h, m)) / (2 * h)
        assert np.allclose(profile.values(t, m, 1), fd, atol=1e-6)
    gram = profile.gram()
    assert np.allclose(gram, gram.T)
    assert np.all(linalg.eigvalsh(gram) > 0)


def test_trial_space_layout(dirichlet_form: PerturbationForm) -> None:
    space = TrialSpace.build(dirichlet_form.problem, [2, 0, 2], 3, n_axial=2)
    assert space.levels == (0, 2)
    assert space.size == 12
    assert space.entries[0] == (0, 0, 0)
    assert space.indices(2).tolist() == list(range(6, 12))
    assert space.indices(0, axial=0).tolist() == [0, 2, 4]
    assert space.gram().shape == (12, 12)
    assert space.with_levels([0, 2]) == space
    assert hash(space.with_levels([2, 0])) == hash(space)
    with pytest.raises(DomainError):
        TrialSpace.build(dirichlet_form.problem, [], 3)


def test_trial_functions_combine(dirichlet_form: PerturbationForm) -> None:
    space = make_space(dirichlet_form)
    other = make_space(dirichlet_form, levels=(1,))
    f = TrialFunction.basis(space, 0) * 2.0 + TrialFunction.basis(space, 1)
    assert f.coefficients.tolist() == [2.0, 1.0, 0.0]
    with pytest.raises(DomainError):
        f + TrialFunction.basis(other, 0)


def test_v_form_is_hermitian_sesquilinear(dirichlet_form: PerturbationForm) -> None:
    space = make_space(dirichlet_form)
    e0 = TrialFunction.basis(space, 0)
    e1 = TrialFunction.basis(space, 1)
    v01 = v_form(dirichlet_form, e0, e1)
    assert v_form(dirichlet_form, e1, e0) == pytest.approx(np.conj(v01))
    assert v_form(dirichlet_form, 1j * e0, e1) == pytest.approx(-1j * v01)
    assert v_form(dirichlet_form, e0, e0).real > 0


def test_dirichlet_perturbation_is_nonnegative(
    dirichlet_form: PerturbationForm,
) -> None:
    report = sign_check(dirichlet_form, make_space(dirichlet_form, levels=(0, 1, 2)))
    assert report.passed
    assert report.boundary_condition == "dirichlet"
    assert report.dimension == 9


def test_neumann_perturbation_is_nonpositive(neumann_form: PerturbationForm) -> None:
    report = sign_check(neumann_form, make_space(neumann_form, n_modes=2))
    assert report.passed
    assert report.max_eigenvalue <= 1e-8 * report.scale


def test_realizations_agree(unit_sphere: SurfaceMesh) -> None:
    problem = ObstacleProblem(unit_sphere, FIELD)
    energy = PerturbationForm(problem)
    strong = PerturbationForm(problem, realization="strong")
    space = make_space(energy)
    a = energy.gram(space)
    b = strong.gram(space)
    assert np.linalg.norm(a - b) <= 0.1 * np.linalg.norm(a)


def test_t_q_is_positive_semidefinite(dirichlet_form: PerturbationForm) -> None:
    T = t_q_matrix(dirichlet_form, 0, 4)
    assert np.allclose(T, T.conj().T)
    eig = graded_eigenvalues(T)
    assert np.all(eig >= 0)
    assert np.all(np.diff(eig) <= 0)


def test_graded_eigenvalues_keep_relative_accuracy() -> None:
    A = np.array([[2.0, 0.5, 0.1], [0.5, 2.0, 0.5], [0.1, 0.5, 2.0]])
    d = np.array([1.0, 1e-4, 1e-8])
    H = d[:, None] * A * d[None, :]
    eig = graded_eigenvalues(H)
    assert np.prod(eig) == pytest.approx(np.linalg.det(A) * np.prod(d**2), rel=1e-8)
    assert eig[-1] > 0
    assert graded_eigenvalues(np.diag([1.0, -1.0])).tolist() == [1.0, -1.0]


def test_a_q_at_zero_reduces_to_t_q(dirichlet_form: PerturbationForm) -> None:
    trial = make_space(dirichlet_form)
    bs = assemble_a_q(dirichlet_form, 0, 0.0, trial, j_max=3)
    block = bs.matrix[np.ix_(bs.q_flat, bs.q_flat)]
    assert np.allclose(block, t_q_matrix(dirichlet_form, 0, 3), atol=1e-8)
    assert bs.space.levels == (0, 1, 2, 3)


def test_level_cutoff_changes_only_new_entries(
    dirichlet_form: PerturbationForm,
) -> None:
    trial = make_space(dirichlet_form, n_modes=2)
    small = assemble_a_q(dirichlet_form, 0, 0.3 + 0.1j, trial, j_max=2)
    large = assemble_a_q(dirichlet_form, 0, 0.3 + 0.1j, trial, j_max=3)
    n = small.space.size
    assert np.allclose(large.matrix[:n, :n], small.matrix, atol=1e-12)
    assert large.truncation_bound < small.truncation_bound


def test_a_q_domain_errors(dirichlet_form: PerturbationForm) -> None:
    trial = make_space(dirichlet_form)
    with pytest.raises(DomainError):
        assemble_a_q(dirichlet_form, 0, 0.1, trial, j_max=1)
    with pytest.raises(DomainError):
        assemble_a_q(dirichlet_form, 0, 1.5, trial, j_max=3)


def test_truncation_bound_decays() -> None:
    bounds = [level_truncation_bound(FIELD, 0, 0.1, j, 2.0) for j in (2, 4, 8)]
    assert bounds[0] > bounds[1] > bounds[2] > 0


def test_cd1_diagnostic_is_reported(dirichlet_form: PerturbationForm) -> None:
    cond = cd1_diagnostic(dirichlet_form, 0, make_space(dirichlet_form), j_max=2)
    assert np.isfinite(cond) and cond >= 1.0


def test_a_q_is_self_adjoint_on_the_imaginary_axis(
    dirichlet_form: PerturbationForm,
) -> None:
    # k = 0.3i puts z = Lambda_0 + k^2 on the real axis below the level
    trial = make_space(dirichlet_form, n_modes=2)
    bs = assemble_a_q(dirichlet_form, 0, 0.3j, trial, j_max=2)
    V = dirichlet_form.gram(bs.space)
    weighted = V @ bs.matrix
    defect = np.max(np.abs(weighted - weighted.conj().T))
    assert defect <= 1e-10 * np.max(np.abs(weighted))


def test_t_q_does_not_depend_on_axial_cutoff(
    dirichlet_form: PerturbationForm,
) -> None:
    narrow = t_q_matrix(dirichlet_form, 0, 4, transition=0.5)
    wide = t_q_matrix(dirichlet_form, 0, 4, transition=2.0)
    assert np.allclose(narrow, wide, rtol=1e-6, atol=1e-12)
    np.testing.assert_allclose(
        graded_eigenvalues(narrow), graded_eigenvalues(wide), rtol=1e-6, atol=1e-12
    )


def test_t_q_spectrum_is_invariant_under_gauge_translation(
    dirichlet_form: PerturbationForm,
) -> None:
    shifted_field = FieldConfig(b=1.0, gauge_center=(2.0, -1.0))
    shifted = PerturbationForm(
        ObstacleProblem(icosphere(1, center=(2.0, -1.0, 0.0)), shifted_field)
    )
    base = graded_eigenvalues(t_q_matrix(dirichlet_form, 0, 4))
    moved = graded_eigenvalues(t_q_matrix(shifted, 0, 4))
    np.testing.assert_allclose(moved, base, rtol=1e-6, atol=1e-12)
