"""Sparse matrix construction, direct solves and submatrix extraction."""

import logging
from typing import Optional

import numpy as np
import scipy.io
import scipy.sparse as sps
from scipy.sparse.linalg import LinearOperator, gmres, spilu, splu

from src.config import config

logger = logging.getLogger(__name__)

SparseMatrix = sps.csr_matrix

MAX_REFINEMENT_STEPS = 3


class LinearSolverError(RuntimeError):
    """A linear solve failed to meet its residual contract."""


class SingularMatrixError(LinearSolverError):
    """The matrix could not be factorized because it is singular."""


def from_triplets(shape: tuple[int, int], rows, cols, values) -> SparseMatrix:
    """CSR matrix from (row, col, value) triplets; duplicates are summed."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not (rows.size == cols.size == values.size):
        raise ValueError("Triplet arrays differ in length")
    if rows.size and (rows.min() < 0 or rows.max() >= shape[0] or cols.min() < 0 or cols.max() >= shape[1]):
        raise ValueError(f"Triplet index out of range for shape {shape}")
    A = sps.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A: SparseMatrix, tol: float = 1e-12) -> bool:
    """Symmetry test relative to the largest entry."""
    if A.shape[0] != A.shape[1]:
        return False
    scale = abs(A).max() if A.nnz else 0.0
    diff = abs(A - A.T)
    return (diff.max() if diff.nnz else 0.0) <= tol * max(scale, 1.0)


def _relative_residual(A: SparseMatrix, x: np.ndarray, b: np.ndarray) -> float:
    bnorm = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / bnorm if bnorm > 0 else r


class DirectSolver:
    """Sparse LU factorization (SuperLU, COLAMD ordering) reusable for many right-hand sides.

    Factorizations are single-owner objects; do not share one across threads.
    """

    def __init__(self, A: SparseMatrix, rtol: Optional[float] = None):
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"Matrix must be square, got shape {A.shape}")
        self.A = sps.csr_matrix(A)
        self.rtol = rtol if rtol is not None else config.LINEAR_RTOL
        try:
            self._lu = splu(sps.csc_matrix(A), permc_spec="COLAMD")
        except RuntimeError as err:
            raise SingularMatrixError(f"Sparse LU failed: {err}") from err

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape != (self.A.shape[0],):
            raise ValueError(f"Right-hand side has shape {b.shape}, matrix is {self.A.shape}")
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("Sparse LU produced non-finite values (singular matrix)")

        res = _relative_residual(self.A, x, b)
        for _ in range(MAX_REFINEMENT_STEPS):
            if res <= self.rtol:
                return x
            x = x + self._lu.solve(b - self.A @ x)
            res = _relative_residual(self.A, x, b)
        if res <= self.rtol:
            return x

        logger.warning(f"[!] Direct solve residual {res:.2e} above {self.rtol:.0e}; trying GMRES/ILU")
        return _krylov_fallback(self.A, b, x, self.rtol)


def _krylov_fallback(A: SparseMatrix, b: np.ndarray, x0: np.ndarray, rtol: float) -> np.ndarray:
    ilu = spilu(sps.csc_matrix(A), drop_tol=1e-6, fill_factor=20)
    M = LinearOperator(A.shape, ilu.solve)
    x, info = gmres(A, b, x0=x0, rtol=0.1 * rtol, atol=0.0, restart=100, maxiter=50, M=M)
    res = _relative_residual(A, x, b)
    if info != 0 or res > rtol:
        raise LinearSolverError(f"Linear solve did not reach residual {rtol:.0e} (got {res:.2e})")
    return x


def solve_linear(A: SparseMatrix, b: np.ndarray, rtol: Optional[float] = None) -> np.ndarray:
    """Solve A x = b with relative residual at most rtol (default 1e-10)."""
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"Matrix must be square, got shape {A.shape}")
    if np.shape(b) != (A.shape[0],):
        raise ValueError(f"Right-hand side has shape {np.shape(b)}, matrix is {A.shape}")
    if A.shape[0] == 0:
        return np.zeros(0)
    return DirectSolver(A, rtol).solve(b)


def extract_submatrix(A: SparseMatrix, rows, cols) -> SparseMatrix:
    """A[rows, cols] with renumbered indices."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    A = sps.csr_matrix(A)
    return sps.csr_matrix(A[rows, :][:, cols])


def export_matrix_market(A: SparseMatrix, path: str) -> None:
    """Write A in Matrix Market coordinate format (debugging aid)."""
    scipy.io.mmwrite(path, sps.coo_matrix(A))
