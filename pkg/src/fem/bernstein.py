"""Bernstein polynomials on intervals and triangles.

Simplicial basis functions are indexed by multi-indices alpha = (a0, a1, a2)
with |alpha| = n and evaluated from barycentric coordinates b = (b0, b1, b2):

    B_alpha(b) = n! / (a0! a1! a2!) * b0^a0 * b1^a1 * b2^a2

The multi-index ordering is fixed: descending in a0, then descending in a1.
For n = 1 this gives the three vertex functions in local vertex order, and
coefficient files written by the experiments follow the same layout.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial
from typing import Optional

import numpy as np

from src.mesh.structured import CellGeometry

MultiIndex = tuple[int, int, int]

BARYCENTRIC_TOL = 1e-12


def univariate_bernstein(n: int, i: int, x):
    """Value of the degree-n Bernstein polynomial b^n_i at x (scalar or array)."""
    if not 0 <= i <= n:
        raise ValueError(f"Bernstein index {i} out of range for degree {n}")
    x = np.asarray(x, dtype=float)
    return comb(n, i) * x ** i * (1.0 - x) ** (n - i)


@lru_cache(maxsize=None)
def enumerate_multiindices(n: int) -> tuple[MultiIndex, ...]:
    """All multi-indices of total degree n in the fixed dof ordering."""
    if n < 0:
        raise ValueError(f"Degree must be nonnegative (got {n})")
    return tuple(
        (a0, a1, n - a0 - a1)
        for a0 in range(n, -1, -1)
        for a1 in range(n - a0, -1, -1)
    )


def bernstein_lattice(n: int) -> np.ndarray:
    """Barycentric lattice points alpha / n, in multi-index order."""
    if n == 0:
        return np.array([[1.0 / 3, 1.0 / 3, 1.0 / 3]])
    return np.array(enumerate_multiindices(n), dtype=float) / n


def _multinomial(alpha: MultiIndex) -> float:
    return factorial(sum(alpha)) / (factorial(alpha[0]) * factorial(alpha[1]) * factorial(alpha[2]))


def _power_product(points: np.ndarray, alpha) -> np.ndarray:
    out = np.ones(points.shape[0])
    for i, a in enumerate(alpha):
        if a < 0:
            return np.zeros(points.shape[0])
        if a > 0:
            out = out * points[:, i] ** a
    return out


def _check_points(points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != 3:
        raise ValueError("Barycentric points must have three coordinates")
    if np.any(points < -BARYCENTRIC_TOL) or np.any(np.abs(points.sum(axis=1) - 1.0) > BARYCENTRIC_TOL):
        raise ValueError("Barycentric points must be nonnegative and sum to one")
    return points


@dataclass(frozen=True)
class ReferenceTabulation:
    """Basis values and barycentric derivatives at a set of points."""
    degree: int
    points: np.ndarray                   # (nq, 3)
    values: np.ndarray                   # (nb, nq)
    dbary: Optional[np.ndarray] = None   # (nb, nq, 3)
    d2bary: Optional[np.ndarray] = None  # (nb, nq, 3, 3)

    def gradients(self, grad_bary: np.ndarray) -> np.ndarray:
        """Physical gradients; grad_bary is (3, 2) or a cell stack (C, 3, 2)."""
        if grad_bary.ndim == 2:
            return np.einsum("bqi,id->bqd", self.dbary, grad_bary)
        return np.einsum("bqi,cid->cbqd", self.dbary, grad_bary)

    def hessians(self, grad_bary: np.ndarray) -> np.ndarray:
        """Physical Hessians; barycentric coordinates are affine so only the
        second barycentric derivatives contribute."""
        if grad_bary.ndim == 2:
            return np.einsum("bqij,id,je->bqde", self.d2bary, grad_bary, grad_bary)
        return np.einsum("bqij,cid,cje->cbqde", self.d2bary, grad_bary, grad_bary, optimize=True)


@dataclass(frozen=True)
class BasisTabulation:
    """Basis values and physical derivatives on one cell."""
    degree: int
    points: np.ndarray
    values: np.ndarray                      # (nb, nq)
    gradients: Optional[np.ndarray] = None  # (nb, nq, 2)
    hessians: Optional[np.ndarray] = None   # (nb, nq, 2, 2)


def tabulate_reference(degree: int, points, order: int = 0) -> ReferenceTabulation:
    """Tabulate B_alpha and its barycentric derivatives up to `order`."""
    if order not in (0, 1, 2):
        raise ValueError(f"Unsupported derivative order {order} (max 2)")
    points = _check_points(points)
    alphas = enumerate_multiindices(degree)
    nq = points.shape[0]
    unit = np.eye(3, dtype=int)

    values = np.empty((len(alphas), nq))
    dbary = np.zeros((len(alphas), nq, 3)) if order >= 1 else None
    d2bary = np.zeros((len(alphas), nq, 3, 3)) if order >= 2 else None

    for b, alpha in enumerate(alphas):
        c = _multinomial(alpha)
        a = np.array(alpha)
        values[b] = c * _power_product(points, a)
        if order >= 1:
            for i in range(3):
                if a[i] > 0:
                    dbary[b, :, i] = c * a[i] * _power_product(points, a - unit[i])
        if order >= 2:
            for i in range(3):
                for j in range(3):
                    ai = a - unit[i]
                    if a[i] == 0 or ai[j] <= 0:
                        continue
                    d2bary[b, :, i, j] = c * a[i] * ai[j] * _power_product(points, ai - unit[j])

    return ReferenceTabulation(degree=degree, points=points, values=values, dbary=dbary, d2bary=d2bary)


def tabulate(degree: int, cell_geom: CellGeometry, points, order: int = 0) -> BasisTabulation:
    """Tabulate the degree-n Bernstein basis on one cell.

    Gradients and Hessians are pushed forward exactly with the constant
    barycentric gradients of the cell.
    """
    ref = tabulate_reference(degree, points, order)
    return BasisTabulation(
        degree=degree,
        points=ref.points,
        values=ref.values,
        gradients=ref.gradients(cell_geom.grad_bary) if order >= 1 else None,
        hessians=ref.hessians(cell_geom.grad_bary) if order >= 2 else None,
    )


def coefficient_box_certificate(coeffs, m: float, M: float) -> bool:
    """True iff every Bernstein coefficient lies in [m, M].

    Because the basis is a nonnegative partition of unity, a positive answer
    bounds the range of the polynomial; a negative one proves nothing.
    """
    if m > M:
        raise ValueError(f"Empty box [{m}, {M}]")
    c = np.asarray(coeffs, dtype=float)
    return bool(np.all(c >= m) and np.all(c <= M))
