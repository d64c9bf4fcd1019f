"""Continuous Bernstein finite element spaces, discrete functions and bound boxes."""

from dataclasses import dataclass, field as dc_field
from enum import IntEnum
from typing import Callable, Iterable

import numpy as np

from src.fem.bernstein import (
    bernstein_lattice,
    enumerate_multiindices,
    tabulate_reference,
    univariate_bernstein,
)
from src.mesh.structured import FacetTag, Mesh

SUPPORTED_DEGREES = (1, 2, 3)

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]


class EntityKind(IntEnum):
    """Mesh entity a dof is attached to."""
    VERTEX = 0
    EDGE = 1
    INTERIOR = 2


@dataclass(frozen=True)
class FunctionSpace:
    """Degree-k C0 Bernstein space with a global dof numbering.

    Vertex dofs come first (dof id = vertex id), then k-1 dofs per edge ordered
    from the lower to the higher global vertex id, then the cell interiors.
    """
    mesh: Mesh
    degree: int
    cell_dofs: np.ndarray    # (C, nb), columns follow enumerate_multiindices(degree)
    dof_kind: np.ndarray     # (ndofs,) EntityKind codes
    dof_entity: np.ndarray   # (ndofs,) vertex / edge / cell id
    ndofs: int

    @property
    def num_basis(self) -> int:
        return self.cell_dofs.shape[1]

    @property
    def dofs_per_edge(self) -> int:
        return self.degree - 1

    def physical_points(self, bary: np.ndarray) -> np.ndarray:
        """Map barycentric points (P, 3) into every cell: (C, P, 2)."""
        return np.einsum("pi,cid->cpd", bary, self.mesh.vertices[self.mesh.cells])

    def cell_values(self, coeffs: np.ndarray, ref_values: np.ndarray) -> np.ndarray:
        """Evaluate a coefficient vector cellwise from reference values (nb, P)."""
        return coeffs[self.cell_dofs] @ ref_values


def build_space(mesh: Mesh, k: int) -> FunctionSpace:
    """Build the global dof map for degree-k Bernstein elements."""
    if k not in SUPPORTED_DEGREES:
        raise ValueError(f"Unsupported degree {k}; expected one of {SUPPORTED_DEGREES}")

    nv, ne_total, nc = mesh.num_vertices, mesh.num_edges, mesh.num_cells
    per_edge = k - 1
    per_cell = (k - 1) * (k - 2) // 2
    edge_offset = nv
    cell_offset = nv + per_edge * ne_total
    ndofs = cell_offset + per_cell * nc

    alphas = enumerate_multiindices(k)
    cells = mesh.cells
    cell_ids = np.arange(nc)
    cell_dofs = np.empty((nc, len(alphas)), dtype=int)
    interior_slot = 0
    for b, alpha in enumerate(alphas):
        support = [i for i in range(3) if alpha[i] > 0]
        if len(support) == 1:
            cell_dofs[:, b] = cells[:, support[0]]
        elif len(support) == 2:
            i, j = support
            opposite = 3 - i - j
            gi, gj = cells[:, i], cells[:, j]
            t = np.where(gi < gj, alpha[j] - 1, alpha[i] - 1)
            cell_dofs[:, b] = edge_offset + mesh.cell_edges[:, opposite] * per_edge + t
        else:
            cell_dofs[:, b] = cell_offset + cell_ids * per_cell + interior_slot
            interior_slot += 1

    dof_kind = np.empty(ndofs, dtype=int)
    dof_entity = np.empty(ndofs, dtype=int)
    dof_kind[:nv] = EntityKind.VERTEX
    dof_entity[:nv] = np.arange(nv)
    dof_kind[edge_offset:cell_offset] = EntityKind.EDGE
    dof_entity[edge_offset:cell_offset] = np.repeat(np.arange(ne_total), per_edge)
    dof_kind[cell_offset:] = EntityKind.INTERIOR
    dof_entity[cell_offset:] = np.repeat(cell_ids, per_cell)

    return FunctionSpace(
        mesh=mesh,
        degree=k,
        cell_dofs=cell_dofs,
        dof_kind=dof_kind,
        dof_entity=dof_entity,
        ndofs=ndofs,
    )


def edge_dofs(space: FunctionSpace, edges: np.ndarray) -> np.ndarray:
    """(len(edges), k+1) dofs along each edge from its lower to higher vertex."""
    mesh = space.mesh
    ends = mesh.edges[edges]
    inner = space.mesh.num_vertices + edges[:, None] * space.dofs_per_edge + np.arange(space.dofs_per_edge)
    return np.concatenate([ends[:, :1], inner, ends[:, 1:]], axis=1)


def dirichlet_dofs(space: FunctionSpace, tags: Iterable[FacetTag]) -> np.ndarray:
    """Sorted dofs lying on boundary facets with any of the given tags."""
    tags = [FacetTag(t) for t in tags]
    mesh = space.mesh
    facets = mesh.facets_with_tags(tags)
    if facets.size == 0:
        return np.empty(0, dtype=int)
    return np.unique(edge_dofs(space, mesh.facet_edges[facets]))


@dataclass
class FEFunction:
    """A member of V_h given by its global Bernstein coefficients."""
    space: FunctionSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndofs,):
            raise ValueError(f"Coefficient vector has shape {self.coeffs.shape}, space has {self.space.ndofs} dofs")

    def copy(self) -> "FEFunction":
        return FEFunction(self.space, self.coeffs.copy())

    @classmethod
    def constant(cls, space: FunctionSpace, value: float) -> "FEFunction":
        return cls(space, np.full(space.ndofs, float(value)))


@dataclass
class BoundsBox:
    """Componentwise bounds lb <= x <= ub on Bernstein coefficients."""
    lb: np.ndarray
    ub: np.ndarray
    fixed: np.ndarray = dc_field(default_factory=lambda: np.empty(0, dtype=int))

    def __post_init__(self):
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.lb.shape != self.ub.shape:
            raise ValueError("Lower and upper bounds differ in shape")
        if np.any(self.lb > self.ub):
            raise ValueError("Bounds box has lb > ub for some component")

    @classmethod
    def uniform(cls, n: int, lower: float = -np.inf, upper: float = np.inf) -> "BoundsBox":
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    @property
    def size(self) -> int:
        return self.lb.size

    @property
    def is_unbounded(self) -> bool:
        return bool(np.all(np.isneginf(self.lb)) and np.all(np.isposinf(self.ub)))

    def with_fixed(self, dofs: np.ndarray, values) -> "BoundsBox":
        """Copy with lb = ub = value at the given dofs (strongly imposed data)."""
        lb, ub = self.lb.copy(), self.ub.copy()
        dofs = np.asarray(dofs, dtype=int)
        lb[dofs] = values
        ub[dofs] = values
        return BoundsBox(lb, ub, fixed=np.union1d(self.fixed, dofs))

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lb), self.ub)

    def violation(self, x: np.ndarray) -> float:
        """Largest distance of x outside the box (0 when feasible)."""
        if x.size == 0:
            return 0.0
        return float(max(np.max(self.lb - x, initial=0.0), np.max(x - self.ub, initial=0.0)))


def sample(field: ScalarField, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate a scalar field, broadcasting constant results to the shape of x."""
    return np.broadcast_to(np.asarray(field(x, y), dtype=float), np.shape(x))


def evaluate_points(f: FEFunction, points: np.ndarray) -> np.ndarray:
    """Evaluate f at physical points (P, 2)."""
    space = f.space
    cells, bary = space.mesh.locate(points)
    bary = np.clip(bary, 0.0, None)
    bary /= bary.sum(axis=1, keepdims=True)
    values = tabulate_reference(space.degree, bary).values  # (nb, P)
    return np.einsum("pb,bp->p", f.coeffs[space.cell_dofs[cells]], values)


def evaluate(f: FEFunction, point) -> float:
    """Value of f at one physical point."""
    return float(evaluate_points(f, np.asarray(point, dtype=float).reshape(1, 2))[0])


def interpolate_field(space: FunctionSpace, field: ScalarField) -> FEFunction:
    """C0 interpolant matching the field at the Bernstein lattice points.

    Vertex coefficients take the field values; edge and interior coefficients
    solve small local systems once lower-dimensional entities are known, so
    the result is exact on P_k and continuous across cells.
    """
    mesh = space.mesh
    k = space.degree
    coeffs = np.empty(space.ndofs)
    v = mesh.vertices
    coeffs[:mesh.num_vertices] = sample(field, v[:, 0], v[:, 1])
    if k == 1:
        return FEFunction(space, coeffs)

    s = np.arange(1, k) / k
    edge_matrix = np.stack([univariate_bernstein(k, t + 1, s) for t in range(k - 1)], axis=1)
    ends = mesh.edges
    pa, pb = v[ends[:, 0]], v[ends[:, 1]]
    pts = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    rhs = sample(field, pts[..., 0], pts[..., 1])
    rhs = rhs - np.outer(coeffs[ends[:, 0]], univariate_bernstein(k, 0, s))
    rhs = rhs - np.outer(coeffs[ends[:, 1]], univariate_bernstein(k, k, s))
    edge_coeffs = np.linalg.solve(edge_matrix, rhs.T).T
    offset = mesh.num_vertices
    coeffs[offset:offset + edge_coeffs.size] = edge_coeffs.ravel()

    alphas = np.array(enumerate_multiindices(k))
    interior = np.flatnonzero(np.all(alphas > 0, axis=1))
    if interior.size:
        boundary = np.setdiff1d(np.arange(len(alphas)), interior)
        lattice = bernstein_lattice(k)
        lat_values = tabulate_reference(k, lattice).values  # (nb, nb)
        pts = space.physical_points(lattice[interior])      # (C, ni, 2)
        rhs = sample(field, pts[..., 0], pts[..., 1])
        rhs = rhs - coeffs[space.cell_dofs[:, boundary]] @ lat_values[np.ix_(boundary, interior)]
        local = np.linalg.solve(lat_values[np.ix_(interior, interior)].T, rhs.T).T
        coeffs[space.cell_dofs[:, interior]] = local

    return FEFunction(space, coeffs)
