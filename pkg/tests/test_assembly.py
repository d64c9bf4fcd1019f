import numpy as np
import pytest

from src.fem.assembly import (
    AssembledSystem,
    Assembler,
    CoefficientField,
    FieldKind,
    apply_dirichlet,
    assemble_convection,
    assemble_diffusion,
    assemble_galerkin,
    assemble_load,
    assemble_mass,
    assemble_supg,
)
from src.fem.space import build_space, dirichlet_dofs, interpolate_field
from src.mesh.structured import FacetTag
from src.solvers.sparse import is_symmetric, solve_linear


def x_field(x, y):
    return x


def y_field(x, y):
    return y


def test_mass_integrates_constants(space):
    M = assemble_mass(space)
    assert M.sum() == pytest.approx(1.0)
    assert is_symmetric(M)
    u = interpolate_field(space, x_field).coeffs
    assert u @ (M @ u) == pytest.approx(1.0 / 3.0)


def test_diffusion_energy(space):
    K = assemble_diffusion(space, 1.0)
    assert np.allclose(K @ np.ones(space.ndofs), 0.0, atol=1e-12)
    assert is_symmetric(K)
    u = interpolate_field(space, x_field).coeffs
    assert u @ (K @ u) == pytest.approx(1.0)


def test_tensor_diffusion(space):
    kappa = CoefficientField.constant(np.diag([2.0, 3.0]))
    K = assemble_diffusion(space, kappa)
    ux = interpolate_field(space, x_field).coeffs
    uy = interpolate_field(space, y_field).coeffs
    assert ux @ (K @ ux) == pytest.approx(2.0)
    assert uy @ (K @ uy) == pytest.approx(3.0)
    assert ux @ (K @ uy) == pytest.approx(0.0, abs=1e-12)


def test_convection_integrates_derivative(space):
    C = assemble_convection(space, np.array([1.0, 0.0]))
    u = interpolate_field(space, x_field).coeffs
    assert np.ones(space.ndofs) @ (C @ u) == pytest.approx(1.0)
    assert np.allclose(C @ np.ones(space.ndofs), 0.0, atol=1e-12)


def test_load_vector(space):
    b = assemble_load(space, lambda x, y: np.ones_like(x))
    assert b.sum() == pytest.approx(1.0)
    b = assemble_load(space, x_field)
    assert b.shape == (space.ndofs,)
    assert b.sum() == pytest.approx(0.5)
    assert b @ interpolate_field(space, y_field).coeffs == pytest.approx(0.25)


def test_neumann_load(space):
    zero = lambda x, y: np.zeros_like(x)  # noqa: E731
    one = lambda x, y: np.ones_like(x)  # noqa: E731
    b = assemble_load(space, zero, neumann=(FacetTag.EXTERIOR, one))
    assert b.sum() == pytest.approx(4.0)
    b = assemble_load(space, zero, neumann=[(FacetTag.EXTERIOR, one)], neumann_sign=-1.0)
    assert b.sum() == pytest.approx(-4.0)
    with pytest.raises(ValueError):
        assemble_load(space, zero, neumann=(FacetTag.HOLE, one))


def test_parallel_assembly_matches_sequential(space):
    kappa = CoefficientField.constant(np.array([[1.0, 0.2], [0.2, 0.5]]))
    serial = Assembler(space, parallel=False).diffusion(kappa).toarray()
    threaded = Assembler(space, parallel=True, chunk=5, workers=3).diffusion(kappa).toarray()
    assert np.array_equal(serial, threaded)


def test_supg_stabilization_is_symmetric_for_linear_elements(unit_mesh):
    space = build_space(unit_mesh, 1)
    beta = np.array([1.0, 2.0])
    f = lambda x, y: np.ones_like(x)  # noqa: E731
    supg = assemble_supg(space, 0.01, beta, f)
    galerkin = assemble_galerkin(space, 0.01, f, beta=beta)
    stab = (supg.A - galerkin.A).toarray()
    assert np.allclose(stab, stab.T, atol=1e-12)
    assert np.linalg.eigvalsh(stab).min() > -1e-12
    # the streamline load term tests f against beta . grad v, which sums to zero over the basis
    assert (supg.b - galerkin.b).sum() == pytest.approx(0.0, abs=1e-12)
    assert np.linalg.norm(supg.b - galerkin.b) > 0


def test_supg_with_zero_delta_is_galerkin(space):
    beta = np.array([1.0, -0.5])
    f = lambda x, y: x + y  # noqa: E731
    supg = assemble_supg(space, 0.1, beta, f, delta=0.0)
    galerkin = assemble_galerkin(space, 0.1, f, beta=beta)
    assert np.allclose(supg.A.toarray(), galerkin.A.toarray(), atol=1e-12)
    assert np.allclose(supg.b, galerkin.b, atol=1e-12)


def test_supg_is_consistent_for_discrete_solutions(unit_mesh):
    # u = x^2 + y solves beta.grad u - div(K grad u) = -2x for K = diag(1 + x, 1), beta = (1, 2)
    space = build_space(unit_mesh, 2)
    kappa = CoefficientField.tensor(
        lambda x, y: np.stack([
            np.stack([1.0 + x, np.zeros_like(x)], axis=-1),
            np.stack([np.zeros_like(x), np.ones_like(x)], axis=-1),
        ], axis=-2),
        div=lambda x, y: np.stack([np.ones_like(x), np.zeros_like(x)], axis=-1),
    )
    system = assemble_supg(space, kappa, np.array([1.0, 2.0]), lambda x, y: -2.0 * x)
    u = interpolate_field(space, lambda x, y: x ** 2 + y).coeffs
    interior = np.setdiff1d(np.arange(space.ndofs), dirichlet_dofs(space, [FacetTag.EXTERIOR]))
    residual = system.A @ u - system.b
    assert np.max(np.abs(residual[interior])) < 1e-10


def test_apply_dirichlet_symmetric_and_idempotent(space):
    system = assemble_galerkin(space, 1.0, lambda x, y: np.ones_like(x))
    dofs = dirichlet_dofs(space, [FacetTag.EXTERIOR])
    once = apply_dirichlet(system, dofs, 0.5)
    twice = apply_dirichlet(once, dofs, 0.5)
    assert is_symmetric(once.A)
    assert np.allclose(once.A.toarray(), twice.A.toarray())
    assert np.allclose(once.b, twice.b)
    u = solve_linear(once.A, once.b)
    assert np.allclose(u[dofs], 0.5)
    assert np.array_equal(once.dirichlet_dofs, dofs)


def test_apply_dirichlet_row_replacement(space):
    system = assemble_supg(space, 0.1, np.array([1.0, 1.0]), lambda x, y: np.ones_like(x))
    dofs = dirichlet_dofs(space, [FacetTag.EXTERIOR])
    fixed = apply_dirichlet(system, dofs, 1.0, symmetric=False)
    row = fixed.A[dofs[0]].toarray().ravel()
    assert row[dofs[0]] == 1.0
    assert np.count_nonzero(row) == 1
    box = fixed.bounds(0.0, 2.0)
    assert np.all(box.lb[dofs] == 1.0) and np.all(box.ub[dofs] == 1.0)


def test_exact_linear_solution_is_reproduced(space):
    system = assemble_galerkin(space, 1.0, lambda x, y: np.zeros_like(x))
    dofs = dirichlet_dofs(space, [FacetTag.EXTERIOR])
    exact = interpolate_field(space, lambda x, y: 1.0 + x - 2.0 * y).coeffs
    system = apply_dirichlet(system, dofs, exact[dofs])
    assert np.allclose(solve_linear(system.A, system.b), exact, atol=1e-10)


def test_coefficient_field_errors():
    beta = CoefficientField.vector(lambda x, y: np.stack([x, y], axis=-1))
    with pytest.raises(ValueError):
        beta.as_tensor(np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        CoefficientField.tensor(lambda x, y: np.eye(2)).divergence(np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        CoefficientField.constant(np.zeros(3))
    scalar = CoefficientField.constant(2.0)
    assert scalar.kind == FieldKind.SCALAR
    assert np.allclose(scalar.as_tensor(np.zeros(3), np.zeros(3)), 2.0 * np.eye(2))
    assert np.allclose(scalar.divergence(np.zeros(3), np.zeros(3)), 0.0)


def test_assembled_system_bounds_without_dirichlet(space):
    system = AssembledSystem(A=assemble_mass(space), b=np.zeros(space.ndofs))
    box = system.bounds(0.0, 1.0)
    assert np.all(box.lb == 0.0) and np.all(box.ub == 1.0)


def test_mass_and_free_diffusion_are_positive_definite(space):
    np.linalg.cholesky(assemble_mass(space).toarray())
    free = np.setdiff1d(np.arange(space.ndofs), dirichlet_dofs(space, [FacetTag.EXTERIOR]))
    K = assemble_diffusion(space, CoefficientField.constant(np.array([[2.0, 0.5], [0.5, 1.0]])))
    np.linalg.cholesky(K[free][:, free].toarray())


def test_convection_is_skew_on_interior_dofs(space):
    def rotation(x, y):
        return np.stack([0.5 - y, x - 0.5], axis=-1)

    C = assemble_convection(space, CoefficientField.vector(rotation))
    free = np.setdiff1d(np.arange(space.ndofs), dirichlet_dofs(space, [FacetTag.EXTERIOR]))
    S = (C + C.T)[free][:, free]
    assert abs(S).max() < 1e-12


PATCH_FORCING = {
    1: lambda x, y: np.zeros_like(x),
    2: lambda x, y: np.full_like(x, -3.0),
    3: lambda x, y: -(6.0 * x + 3.0 * y),
}


def test_patch_test_reproduces_degree_k_polynomials(space):
    k = space.degree

    def exact(x, y):
        return 1.0 + x - y + x ** k + 0.5 * y ** k

    system = assemble_galerkin(space, 1.0, PATCH_FORCING[k])
    dofs = dirichlet_dofs(space, [FacetTag.EXTERIOR])
    u = interpolate_field(space, exact).coeffs
    system = apply_dirichlet(system, dofs, u[dofs])
    assert np.allclose(solve_linear(system.A, system.b), u, atol=1e-9)
