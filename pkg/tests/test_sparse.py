import numpy as np
import pytest
import scipy.io
import scipy.sparse as sps

from src.solvers.sparse import (
    DirectSolver,
    SingularMatrixError,
    export_matrix_market,
    extract_submatrix,
    from_triplets,
    is_symmetric,
    solve_linear,
)


def test_from_triplets_sums_duplicates():
    A = from_triplets((2, 3), [0, 0, 1], [1, 1, 2], [1.0, 2.5, -1.0])
    assert A.shape == (2, 3)
    assert A[0, 1] == 3.5
    assert A[1, 2] == -1.0
    assert A.nnz == 2
    assert A.has_sorted_indices


def test_from_triplets_validation():
    with pytest.raises(ValueError):
        from_triplets((2, 2), [0, 1], [0], [1.0, 2.0])
    with pytest.raises(ValueError):
        from_triplets((2, 2), [0, 2], [0, 1], [1.0, 2.0])
    assert from_triplets((3, 3), [], [], []).nnz == 0


def test_solve_linear_residual(spd_matrix, rng):
    A = spd_matrix(rng, 30)
    b = rng.standard_normal(30)
    x = solve_linear(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_solve_linear_nonsymmetric(rng):
    A = sps.csr_matrix(np.eye(20) * 4 + rng.standard_normal((20, 20)))
    b = rng.standard_normal(20)
    x = solve_linear(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_solve_linear_errors():
    A = sps.csr_matrix(np.eye(3))
    with pytest.raises(ValueError):
        solve_linear(A, np.ones(4))
    with pytest.raises(ValueError):
        solve_linear(sps.csr_matrix(np.ones((2, 3))), np.ones(2))
    assert solve_linear(sps.csr_matrix((0, 0)), np.zeros(0)).shape == (0,)


def test_singular_matrix_is_reported():
    A = sps.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SingularMatrixError):
        solve_linear(A, np.array([1.0, 1.0]))


def test_direct_solver_reuse(spd_matrix, rng):
    A = spd_matrix(rng, 12)
    solver = DirectSolver(A)
    for _ in range(3):
        b = rng.standard_normal(12)
        assert np.allclose(A @ solver.solve(b), b)


def test_extract_submatrix():
    A = sps.csr_matrix(np.arange(16, dtype=float).reshape(4, 4))
    sub = extract_submatrix(A, [1, 3], [0, 2])
    assert np.array_equal(sub.toarray(), [[4.0, 6.0], [12.0, 14.0]])


def test_is_symmetric(spd_matrix, rng):
    A = spd_matrix(rng, 5)
    assert is_symmetric(A)
    B = A.tolil()
    B[0, 1] += 1.0
    assert not is_symmetric(B.tocsr())
    assert not is_symmetric(sps.csr_matrix(np.ones((2, 3))))


def test_export_matrix_market(tmp_path, spd_matrix, rng):
    A = spd_matrix(rng, 4)
    path = tmp_path / "A.mtx"
    export_matrix_market(A, str(path))
    assert np.allclose(scipy.io.mmread(str(path)).toarray(), A.toarray())
