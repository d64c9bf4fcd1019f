import numpy as np
import pytest

from src.fem.bernstein import tabulate_reference
from src.fem.space import (
    BoundsBox,
    FEFunction,
    build_space,
    dirichlet_dofs,
    evaluate,
    evaluate_points,
    interpolate_field,
)
from src.mesh.structured import DomainKind, DomainSpec, FacetTag, build_mesh


@pytest.mark.parametrize("k,expected", [(1, 25), (2, 81), (3, 169)])
def test_dof_counts(unit_mesh, k, expected):
    space = build_space(unit_mesh, k)
    assert space.ndofs == expected
    assert space.num_basis == (k + 1) * (k + 2) // 2
    assert np.array_equal(np.unique(space.cell_dofs), np.arange(expected))


def test_unsupported_degree(unit_mesh):
    with pytest.raises(ValueError):
        build_space(unit_mesh, 4)


def test_vertex_dofs_come_first(space):
    assert np.array_equal(space.cell_dofs[:, 0], space.mesh.cells[:, 0])


@pytest.mark.parametrize("k", [1, 2, 3])
def test_dirichlet_dofs_on_boundary(unit_mesh, k):
    space = build_space(unit_mesh, k)
    dofs = dirichlet_dofs(space, [FacetTag.EXTERIOR])
    assert dofs.size == 4 * unit_mesh.domain.n * k
    assert dirichlet_dofs(space, [FacetTag.HOLE]).size == 0


def test_shared_edge_is_continuous(space, rng):
    # cells 0 and 1 share the diagonal of the first grid square
    coeffs = rng.standard_normal(space.ndofs)
    left = tabulate_reference(space.degree, np.array([[0.3, 0.0, 0.7]])).values
    right = tabulate_reference(space.degree, np.array([[0.3, 0.7, 0.0]])).values
    mesh = space.mesh
    n_squares = mesh.domain.n ** 2
    a, b = 0, n_squares
    assert mesh.cells[a, 0] == mesh.cells[b, 0] and mesh.cells[a, 2] == mesh.cells[b, 1]
    assert coeffs[space.cell_dofs[a]] @ left[:, 0] == pytest.approx(coeffs[space.cell_dofs[b]] @ right[:, 0])


def test_interpolation_reproduces_polynomials(space, rng):
    k = space.degree

    def poly(x, y):
        return 1.0 + 2.0 * x - y + x ** (k - 1) * y

    u = interpolate_field(space, poly)
    pts = rng.uniform(0.0, 1.0, size=(40, 2))
    assert np.allclose(evaluate_points(u, pts), poly(pts[:, 0], pts[:, 1]), atol=1e-12)
    assert evaluate(u, (0.25, 0.75)) == pytest.approx(poly(0.25, 0.75))


def test_interpolation_on_hole_domain():
    space = build_space(build_mesh(DomainSpec(kind=DomainKind.SQUARE_WITH_HOLE, n=9)), 2)
    u = interpolate_field(space, lambda x, y: x * y)
    assert evaluate(u, (0.2, 0.9)) == pytest.approx(0.18)


def test_fe_function_shape_check(space):
    with pytest.raises(ValueError):
        FEFunction(space, np.zeros(space.ndofs + 1))
    c = FEFunction.constant(space, 2.5)
    assert evaluate(c, (0.5, 0.5)) == pytest.approx(2.5)


def test_bounds_box():
    box = BoundsBox.uniform(4, 0.0, 1.0)
    assert not box.is_unbounded
    assert BoundsBox.uniform(3).is_unbounded
    x = np.array([-0.5, 0.5, 1.25, 1.0])
    assert box.violation(x) == pytest.approx(0.5)
    assert np.array_equal(box.clamp(x), [0.0, 0.5, 1.0, 1.0])
    fixed = box.with_fixed(np.array([1, 2]), [0.3, 0.7])
    assert fixed.lb[1] == fixed.ub[1] == 0.3
    assert np.array_equal(fixed.fixed, [1, 2])
    assert box.lb[1] == 0.0
    with pytest.raises(ValueError):
        BoundsBox(np.array([1.0]), np.array([0.0]))
