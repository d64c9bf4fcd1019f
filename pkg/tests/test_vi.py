import csv

import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from src.approx.constrained import error_norms
from src.benchmarks.problems import mms_diffusion
from src.experiments.runner import build_problem_space, solve_stationary
from src.experiments.schema import SolverKind
from src.fem.assembly import assemble_diffusion, assemble_load
from src.fem.space import BoundsBox, FEFunction, build_space, interpolate_field
from src.mesh.structured import DomainKind, DomainSpec, build_mesh
from src.solvers.sparse import solve_linear
from src.solvers.vi import (
    BoxVIProblem,
    constrained_l2_projection,
    is_feasible,
    projected_residual,
    solve_box_vi,
    write_iteration_log,
)


def random_box(rng, n):
    lb = rng.uniform(-1.0, 0.0, n)
    ub = lb + rng.uniform(0.0, 2.0, n)
    lb[rng.random(n) < 0.2] = -np.inf
    ub[rng.random(n) < 0.2] = np.inf
    return BoundsBox(lb, ub)


def test_matches_brute_force_oracle(rng, spd_matrix, box_qp_oracle):
    for _ in range(100):
        n = int(rng.integers(1, 9))
        A = spd_matrix(rng, n)
        b = 3.0 * rng.standard_normal(n)
        box = random_box(rng, n)
        report = solve_box_vi(BoxVIProblem(A, b, box))
        assert report.converged
        expected = box_qp_oracle(A, b, box.lb, box.ub)
        assert np.allclose(report.solution, expected, atol=1e-8)
        assert is_feasible(report.solution, box)


def test_unbounded_matches_linear_solve(rng, spd_matrix):
    for _ in range(10):
        n = int(rng.integers(1, 30))
        A = spd_matrix(rng, n)
        b = rng.standard_normal(n)
        report = solve_box_vi(BoxVIProblem(A, b, BoundsBox.uniform(n)))
        assert report.converged
        assert np.allclose(report.solution, solve_linear(A, b), atol=1e-10)
        assert report.active_lower.size == report.active_upper.size == 0


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(min_value=0.1, max_value=10.0), min_size=1, max_size=6),
    st.integers(min_value=0, max_value=2 ** 32 - 1),
)
def test_diagonal_problems_clamp(diagonal, seed):
    rng = np.random.default_rng(seed)
    d = np.array(diagonal)
    b = rng.uniform(-5.0, 5.0, d.size)
    box = BoundsBox.uniform(d.size, -0.5, 0.5)
    report = solve_box_vi(BoxVIProblem(sps.diags(d).tocsr(), b, box))
    assert np.allclose(report.solution, np.clip(b / d, -0.5, 0.5), atol=1e-10)
    assert np.max(np.abs(projected_residual(sps.diags(d).tocsr(), b, box, report.solution))) <= 1e-8


def test_nonsymmetric_problem(rng):
    n = 40
    main = 4.0 * np.ones(n)
    A = sps.diags([main, -1.5 * np.ones(n - 1), -0.5 * np.ones(n - 1)], [0, 1, -1]).tocsr()
    b = rng.uniform(-2.0, 4.0, n)
    box = BoundsBox.uniform(n, 0.0, 0.8)
    report = solve_box_vi(BoxVIProblem(A, b, box), tol=1e-10)
    assert report.converged
    assert is_feasible(report.solution, box)
    assert np.max(np.abs(projected_residual(A, b, box, report.solution))) <= 1e-10
    assert report.active_lower.size + report.active_upper.size > 0


def test_pinned_dofs_stay_fixed(rng, spd_matrix):
    A = spd_matrix(rng, 6)
    box = BoundsBox.uniform(6, -1.0, 1.0).with_fixed(np.array([0, 3]), [0.25, -0.75])
    report = solve_box_vi(BoxVIProblem(A, rng.standard_normal(6), box))
    assert report.solution[0] == 0.25
    assert report.solution[3] == -0.75


def test_iteration_budget_exhausted(rng, spd_matrix):
    A = spd_matrix(rng, 8)
    b = 10.0 * np.abs(rng.standard_normal(8)) + 1.0
    report = solve_box_vi(BoxVIProblem(A, b, BoundsBox.uniform(8, 0.0, 0.1)), max_iter=0)
    assert not report.converged
    assert report.iterations == 0
    assert len(report.history) == 1


def test_argument_validation(spd_matrix, rng):
    A = spd_matrix(rng, 3)
    with pytest.raises(ValueError):
        BoxVIProblem(A, np.zeros(4), BoundsBox.uniform(3))
    with pytest.raises(ValueError):
        BoxVIProblem(A, np.zeros(3), BoundsBox.uniform(3), x0=np.zeros(2))
    with pytest.raises(ValueError):
        solve_box_vi(BoxVIProblem(A, np.zeros(3), BoundsBox.uniform(3)), tol=0.0)


def test_initial_guess_is_clamped(spd_matrix, rng):
    box = BoundsBox.uniform(3, 0.0, 1.0)
    problem = BoxVIProblem(spd_matrix(rng, 3), np.zeros(3), box, x0=np.array([-1.0, 0.5, 2.0]))
    assert np.array_equal(problem.x0, [0.0, 0.5, 1.0])


def test_energy_is_monotone_for_symmetric_problems(rng, spd_matrix):
    A = spd_matrix(rng, 8)
    report = solve_box_vi(BoxVIProblem(A, 5.0 * rng.standard_normal(8), BoundsBox.uniform(8, -0.2, 0.3)))
    energies = [rec.energy for rec in report.history]
    assert all(b <= a + 1e-12 * (1 + abs(a)) for a, b in zip(energies, energies[1:]))


def test_write_iteration_log(tmp_path, rng, spd_matrix):
    A = spd_matrix(rng, 5)
    report = solve_box_vi(BoxVIProblem(A, rng.standard_normal(5), BoundsBox.uniform(5, 0.0, 0.1)))
    path = write_iteration_log(report, tmp_path / "log" / "vi.csv")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(report.history)
    assert float(rows[-1]["residual"]) == pytest.approx(report.final_residual)


def test_constrained_l2_projection():
    space = build_space(build_mesh(DomainSpec(kind=DomainKind.UNIT_SQUARE, n=6)), 2)

    def bump(x, y):
        return np.maximum(0.0, 1.0 - 8.0 * np.hypot(x - 0.5, y - 0.5))

    box = BoundsBox.uniform(space.ndofs, 0.0, 1.0)
    u, report = constrained_l2_projection(space, bump, box)
    assert report.converged
    assert u.coeffs.min() >= -1e-12 and u.coeffs.max() <= 1.0 + 1e-12
    # the unconstrained projection of a kink undershoots
    assert report.active_lower.size > 0


def test_projection_of_feasible_member_is_identity():
    space = build_space(build_mesh(DomainSpec(kind=DomainKind.UNIT_SQUARE, n=4)), 1)

    def ramp(x, y):
        return 0.2 + 0.5 * x

    u, report = constrained_l2_projection(space, ramp, BoundsBox.uniform(space.ndofs, 0.0, 1.0))
    assert report.converged
    assert report.active_lower.size == report.active_upper.size == 0
    assert np.allclose(u.coeffs, interpolate_field(space, ramp).coeffs, atol=1e-10)


def _best_energy_ratio(n: int) -> float:
    """||u* - u_h||_energy over the smallest energy error of any coefficient vector in the box."""
    problem = mms_diffusion(n=n)
    space = build_problem_space(problem, 1)
    result = solve_stationary(problem, space, SolverKind.VI)
    vi_error = error_norms(space, result.vi, problem.exact, problem.exact_grad, problem.kappa).energy

    K = assemble_diffusion(space, problem.kappa)
    g = assemble_load(space, problem.f)
    boundary, _ = problem.dirichlet_data(space)
    interior = np.setdiff1d(np.arange(space.ndofs), boundary)
    Kii = K[interior][:, interior]
    zero = FEFunction(space, np.zeros(space.ndofs))
    exact_energy = error_norms(space, zero, problem.exact, problem.exact_grad, problem.kappa).energy ** 2

    def energy_error(c):
        Kc = Kii @ c
        return exact_energy - 2.0 * g[interior] @ c + c @ Kc, 2.0 * (Kc - g[interior])

    start = np.clip(result.vi.coeffs[interior], 0.0, None)
    best = minimize(
        energy_error, start, jac=True, method="L-BFGS-B",
        bounds=[(0.0, None)] * interior.size,
        options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10000},
    )
    return vi_error / np.sqrt(max(best.fun, 1e-300))


def test_vi_solution_is_near_best_box_approximation():
    coarse = _best_energy_ratio(4)
    fine = _best_energy_ratio(8)
    assert coarse <= 10.0
    assert fine <= 10.0
    assert abs(fine - coarse) <= 0.2 * coarse
