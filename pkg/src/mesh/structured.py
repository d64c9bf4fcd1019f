"""Structured triangulations - unit square, square with a hole, centered square."""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

logger = logging.getLogger(__name__)


class DomainKind(str, Enum):
    """The three domains used by the experiments."""
    UNIT_SQUARE = "unit_square"              # [0,1]^2
    SQUARE_WITH_HOLE = "square_with_hole"    # [0,1]^2 minus [4/9,5/9]^2
    CENTERED_SQUARE = "centered_square"      # [-1/2,1/2]^2


class FacetTag(str, Enum):
    """Boundary facet markers."""
    EXTERIOR = "exterior"
    HOLE = "hole"
    NONE = "none"


class DegenerateCellError(ValueError):
    """A cell with (numerically) zero area."""


class DomainSpec(BaseModel):
    """Domain kind plus number of cells per side."""
    kind: DomainKind
    n: int = Field(ge=1)

    @model_validator(mode="after")
    def _hole_alignment(self) -> "DomainSpec":
        if self.kind == DomainKind.SQUARE_WITH_HOLE and self.n % 9 != 0:
            raise ValueError(f"square_with_hole needs n divisible by 9 (got {self.n})")
        return self

    @property
    def box(self) -> tuple[float, float]:
        """Lower-left and upper-right coordinate of the outer square."""
        if self.kind == DomainKind.CENTERED_SQUARE:
            return -0.5, 0.5
        return 0.0, 1.0

    @property
    def area(self) -> float:
        if self.kind == DomainKind.SQUARE_WITH_HOLE:
            return 1.0 - 1.0 / 81.0
        return 1.0


@dataclass(frozen=True)
class CellGeometry:
    """Affine geometry of a single triangle."""
    area: float
    diameter: float
    grad_bary: np.ndarray  # (3, 2), row i is the constant gradient of b_i


@dataclass(frozen=True)
class GeometryBatch:
    """Vectorized geometry of every cell of a mesh."""
    areas: np.ndarray       # (C,)
    diameters: np.ndarray   # (C,)
    grad_bary: np.ndarray   # (C, 3, 2)


def _triangle_geometry(p: np.ndarray) -> GeometryBatch:
    """Geometry for a stack of triangles p with shape (C, 3, 2)."""
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e2[:, 0] * e1[:, 1]
    lengths = np.stack([
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
        np.linalg.norm(e2, axis=1),
        np.linalg.norm(e1, axis=1),
    ], axis=1)
    diameters = lengths.max(axis=1)

    bad = np.abs(det) <= 1e-14 * np.maximum(diameters, 1e-300) ** 2
    if np.any(bad):
        raise DegenerateCellError(f"Degenerate cell(s): {np.flatnonzero(bad)[:10].tolist()}")

    grad = np.empty((p.shape[0], 3, 2))
    grad[:, 1, 0] = e2[:, 1] / det
    grad[:, 1, 1] = -e2[:, 0] / det
    grad[:, 2, 0] = -e1[:, 1] / det
    grad[:, 2, 1] = e1[:, 0] / det
    grad[:, 0] = -(grad[:, 1] + grad[:, 2])
    return GeometryBatch(areas=0.5 * det, diameters=diameters, grad_bary=grad)


@dataclass(frozen=True)
class Mesh:
    """A 2D simplicial triangulation with tagged boundary facets.

    Facets are stored with the orientation of their (unique) adjacent cell, so
    the outward normal of facet (a, b) is the clockwise rotation of b - a.
    """
    vertices: np.ndarray         # (V, 2)
    cells: np.ndarray            # (C, 3), counterclockwise
    boundary_facets: np.ndarray  # (F, 2)
    facet_tags: np.ndarray       # (F,) FacetTag values
    domain: Optional[DomainSpec] = None

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    @cached_property
    def _edge_data(self) -> tuple[np.ndarray, np.ndarray]:
        nv = self.num_vertices
        local = np.stack([self.cells[:, [1, 2]], self.cells[:, [2, 0]], self.cells[:, [0, 1]]], axis=1)
        lo = local.min(axis=2)
        hi = local.max(axis=2)
        keys = (lo * nv + hi).ravel()
        unique_keys, inverse = np.unique(keys, return_inverse=True)
        edges = np.stack([unique_keys // nv, unique_keys % nv], axis=1)
        return edges, inverse.reshape(-1, 3)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges (E, 2) with ascending vertex ids."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """(C, 3) edge id opposite each local vertex."""
        return self._edge_data[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def facet_edges(self) -> np.ndarray:
        """Edge id of every boundary facet."""
        nv = self.num_vertices
        edges = self.edges
        edge_keys = edges[:, 0] * nv + edges[:, 1]
        lo = self.boundary_facets.min(axis=1)
        hi = self.boundary_facets.max(axis=1)
        return np.searchsorted(edge_keys, lo * nv + hi)

    @cached_property
    def geometry(self) -> GeometryBatch:
        return _triangle_geometry(self.vertices[self.cells])

    @property
    def max_diameter(self) -> float:
        return float(self.geometry.diameters.max())

    def facets_with_tags(self, tags: Iterable[FacetTag]) -> np.ndarray:
        """Indices of boundary facets carrying any of the given tags."""
        values = [FacetTag(t).value for t in tags]
        return np.flatnonzero(np.isin(self.facet_tags, values))

    def facet_midpoints(self) -> np.ndarray:
        return self.vertices[self.boundary_facets].mean(axis=1)

    def facet_normals(self) -> np.ndarray:
        """Outward unit normals of the boundary facets."""
        d = self.vertices[self.boundary_facets[:, 1]] - self.vertices[self.boundary_facets[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def locate(self, points: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
        """Find a containing cell and barycentric coordinates for each point.

        Raises ValueError if a point lies outside every cell.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        grad = self.geometry.grad_bary
        origin = self.vertices[self.cells[:, 0]]
        chunk = max(1, 4_000_000 // max(self.num_cells, 1))

        cell_ids = np.empty(points.shape[0], dtype=int)
        bary = np.empty((points.shape[0], 3))
        for start in range(0, points.shape[0], chunk):
            pts = points[start:start + chunk]
            rel = pts[:, None, :] - origin[None, :, :]
            l1 = np.einsum("pcd,cd->pc", rel, grad[:, 1])
            l2 = np.einsum("pcd,cd->pc", rel, grad[:, 2])
            l0 = 1.0 - l1 - l2
            worst = np.minimum(np.minimum(l0, l1), l2)
            best = worst.argmax(axis=1)
            rows = np.arange(pts.shape[0])
            if np.any(worst[rows, best] < -tol):
                outside = pts[worst[rows, best] < -tol][0]
                raise ValueError(f"Point {outside.tolist()} lies outside the mesh")
            cell_ids[start:start + chunk] = best
            bary[start:start + chunk] = np.stack([l0[rows, best], l1[rows, best], l2[rows, best]], axis=1)
        return cell_ids, bary


def _boundary_from_cells(cells: np.ndarray) -> np.ndarray:
    """Oriented edges that belong to exactly one cell."""
    local = np.concatenate([cells[:, [1, 2]], cells[:, [2, 0]], cells[:, [0, 1]]])
    key_pairs = np.sort(local, axis=1)
    _, inverse, counts = np.unique(key_pairs, axis=0, return_inverse=True, return_counts=True)
    return local[counts[inverse.ravel()] == 1]


def _compact(vertices: np.ndarray, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop vertices that no cell references and renumber."""
    used = np.unique(cells)
    renumber = np.full(vertices.shape[0], -1, dtype=int)
    renumber[used] = np.arange(used.size)
    return vertices[used], renumber[cells]


def build_mesh(spec: DomainSpec) -> Mesh:
    """Build the structured triangulation for a domain spec.

    Each grid square is split along its lower-left to upper-right diagonal.
    """
    n = spec.n
    lo, hi = spec.box
    ticks = np.linspace(lo, hi, n + 1)
    xx, yy = np.meshgrid(ticks, ticks)
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    if spec.kind == DomainKind.SQUARE_WITH_HOLE:
        a, b = 4 * n // 9, 5 * n // 9
        keep = ~((i >= a) & (i < b) & (j >= a) & (j < b))
        i, j = i[keep], j[keep]

    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    cells = np.concatenate([
        np.stack([v00, v10, v11], axis=1),
        np.stack([v00, v11, v01], axis=1),
    ])
    vertices, cells = _compact(vertices, cells)

    facets = _boundary_from_cells(cells)
    mid = vertices[facets].mean(axis=1)
    on_outer = (np.isclose(mid, lo, atol=1e-12) | np.isclose(mid, hi, atol=1e-12)).any(axis=1)
    tags = np.where(on_outer, FacetTag.EXTERIOR.value, FacetTag.HOLE.value)

    mesh = Mesh(vertices=vertices, cells=cells, boundary_facets=facets, facet_tags=tags, domain=spec)
    logger.debug(f"[Mesh] {spec.kind.value} n={n}: {mesh.num_cells} cells, {mesh.num_vertices} vertices")
    return mesh


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children through edge midpoints."""
    nv = mesh.num_vertices
    midpoints = mesh.vertices[mesh.edges].mean(axis=1)
    vertices = np.concatenate([mesh.vertices, midpoints])

    c = mesh.cells
    m = nv + mesh.cell_edges  # m[:, i] is the midpoint opposite local vertex i
    cells = np.concatenate([
        np.stack([c[:, 0], m[:, 2], m[:, 1]], axis=1),
        np.stack([m[:, 2], c[:, 1], m[:, 0]], axis=1),
        np.stack([m[:, 1], m[:, 0], c[:, 2]], axis=1),
        np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
    ])

    fm = nv + mesh.facet_edges
    facets = np.concatenate([
        np.stack([mesh.boundary_facets[:, 0], fm], axis=1),
        np.stack([fm, mesh.boundary_facets[:, 1]], axis=1),
    ])
    tags = np.concatenate([mesh.facet_tags, mesh.facet_tags])

    domain = mesh.domain.model_copy(update={"n": 2 * mesh.domain.n}) if mesh.domain else None
    return Mesh(vertices=vertices, cells=cells, boundary_facets=facets, facet_tags=tags, domain=domain)


def cell_geometry(mesh: Mesh, cell: int) -> CellGeometry:
    """Area, diameter and barycentric gradients of one cell."""
    if not 0 <= cell < mesh.num_cells:
        raise IndexError(f"Cell index {cell} out of range [0, {mesh.num_cells})")
    batch = _triangle_geometry(mesh.vertices[mesh.cells[cell]][None])
    return CellGeometry(
        area=float(batch.areas[0]),
        diameter=float(batch.diameters[0]),
        grad_bary=batch.grad_bary[0],
    )


def classify_inflow_outflow(mesh: Mesh, beta, tags: Iterable[FacetTag]) -> tuple[np.ndarray, np.ndarray]:
    """Split tagged facets into (inflow, outflow) by the sign of beta . n at midpoints.

    Inflow facets have beta . n < 0.
    """
    facets = mesh.facets_with_tags(tags)
    mid = mesh.facet_midpoints()[facets]
    b = np.asarray(beta(mid[:, 0], mid[:, 1]))
    flux = np.einsum("fd,fd->f", b, mesh.facet_normals()[facets])
    return facets[flux < 0], facets[flux >= 0]
