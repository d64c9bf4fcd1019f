"""Quadrature on the reference triangle and on intervals.

Triangle rules are collapsed (Duffy) tensor products of Gauss-Legendre rules,
so all weights are positive. Points are returned as barycentric triples; the
weights sum to the reference area 1/2.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_EXACTNESS = 12


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates with reference-area weights."""
    points: np.ndarray   # (nq, 3)
    weights: np.ndarray  # (nq,)
    exactness: int

    @property
    def num_points(self) -> int:
        return self.weights.size


@lru_cache(maxsize=None)
def quadrature_rule(exactness: int) -> QuadratureRule:
    """Rule integrating every polynomial of total degree <= exactness exactly."""
    if exactness < 0:
        raise ValueError(f"Need nonnegative exactness, not {exactness}")
    if exactness > MAX_EXACTNESS:
        raise ValueError(f"Triangle quadrature of exactness {exactness} not supported (max {MAX_EXACTNESS})")

    # x = u, y = v (1 - u), dx dy = (1 - u) du dv; the u-integrand gains a degree
    m = (exactness + 3) // 2
    s, w = np.polynomial.legendre.leggauss(m)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w

    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    x = u.ravel()
    y = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel()
    points = np.stack([1.0 - x - y, x, y], axis=1)
    return QuadratureRule(points=points, weights=weights, exactness=exactness)


@lru_cache(maxsize=None)
def line_rule(exactness: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    m = max(1, (exactness + 2) // 2)
    s, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (s + 1.0), 0.5 * w
