"""CSV, VTK and JSON output for the experiment studies."""

import csv
import logging
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np
from pydantic import BaseModel

from src.fem.bernstein import bernstein_lattice, enumerate_multiindices, tabulate_reference
from src.fem.space import FEFunction
from src.experiments.schema import CSV_COLUMNS, ConvergenceRow
from src.mesh.structured import Mesh

logger = logging.getLogger(__name__)

VTK_TRIANGLE = 5

Fields = Union[Mapping[str, FEFunction], Iterable[tuple[str, FEFunction]]]


def _prepare(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(rows: list[ConvergenceRow], path) -> Path:
    """Convergence table with header N,ul2,cl2,uh1,ch1,uen,cen at full precision."""
    path = _prepare(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([row.N] + [f"{getattr(row, c):.17g}" for c in CSV_COLUMNS[1:]])
    return path


def read_csv(path) -> list[ConvergenceRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"Unexpected CSV header {reader.fieldnames}")
        return [ConvergenceRow(**{k: (int(v) if k == "N" else float(v)) for k, v in rec.items()}) for rec in reader]


def write_coefficients_csv(f: FEFunction, path) -> Path:
    """One `dof,value` line per global Bernstein coefficient."""
    path = _prepare(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dof", "value"])
        for dof, value in enumerate(f.coeffs):
            writer.writerow([dof, f"{value:.17g}"])
    return path


def write_summary(summary: BaseModel, path) -> Path:
    path = _prepare(path)
    path.write_text(summary.model_dump_json(indent=2))
    return path


@lru_cache(maxsize=None)
def subdivision_triangles(d: int) -> np.ndarray:
    """Triangles (local lattice indices) splitting the reference cell into d^2 pieces."""
    index = {(a[1], a[2]): i for i, a in enumerate(enumerate_multiindices(d))}
    tris = []
    for i in range(d):
        for j in range(d - i):
            tris.append((index[(i, j)], index[(i + 1, j)], index[(i, j + 1)]))
            if i + j < d - 1:
                tris.append((index[(i + 1, j)], index[(i + 1, j + 1)], index[(i, j + 1)]))
    return np.array(tris, dtype=int)


def visualization_mesh(mesh: Mesh, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(points, triangles, barycentric lattice) of the per-cell degree-d subdivision.

    Points are duplicated per cell, so discontinuities in the sampled fields
    would remain visible.
    """
    if d == 1:
        return mesh.vertices, mesh.cells, bernstein_lattice(1)
    lattice = bernstein_lattice(d)
    points = np.einsum("pi,cid->cpd", lattice, mesh.vertices[mesh.cells]).reshape(-1, 2)
    local = subdivision_triangles(d)
    offsets = np.arange(mesh.num_cells)[:, None, None] * lattice.shape[0]
    return points, (local[None] + offsets).reshape(-1, 3), lattice


def _named(fields: Fields) -> list[tuple[str, FEFunction]]:
    items = list(fields.items()) if isinstance(fields, Mapping) else list(fields)
    for name, _ in items:
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"VTK field names must be non-empty without whitespace: {name!r}")
    return items


def write_vtk(mesh: Mesh, fields: Fields, path) -> Path:
    """Legacy ASCII (3.0) unstructured grid with one point scalar per field."""
    items = _named(fields)
    if any(f.space.mesh is not mesh for _, f in items):
        raise ValueError("All fields must live on the mesh being written")
    d = max([f.space.degree for _, f in items], default=1)
    points, triangles, lattice = visualization_mesh(mesh, d)

    path = _prepare(path)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{path.stem}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {points.shape[0]} double\n")
        np.savetxt(fh, np.column_stack([points, np.zeros(points.shape[0])]), fmt="%.17g")
        fh.write(f"CELLS {triangles.shape[0]} {4 * triangles.shape[0]}\n")
        np.savetxt(fh, np.column_stack([np.full(triangles.shape[0], 3), triangles]), fmt="%d")
        fh.write(f"CELL_TYPES {triangles.shape[0]}\n")
        np.savetxt(fh, np.full(triangles.shape[0], VTK_TRIANGLE), fmt="%d")
        if items:
            fh.write(f"POINT_DATA {points.shape[0]}\n")
        for name, f in items:
            if d == 1:
                values = f.coeffs[:mesh.num_vertices]
            else:
                values = f.space.cell_values(f.coeffs, tabulate_reference(f.space.degree, lattice).values).ravel()
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, values, fmt="%.17g")
    logger.debug(f"[*] Wrote {path} ({len(items)} fields, {triangles.shape[0]} triangles)")
    return path
