import json
import math

import numpy as np
import pytest

from src.experiments.schema import CSV_COLUMNS, ConvergenceRow, Experiment, RunSummary
from src.experiments.writers import (
    read_csv,
    subdivision_triangles,
    visualization_mesh,
    write_coefficients_csv,
    write_csv,
    write_summary,
    write_vtk,
)
from src.fem.space import build_space, interpolate_field
from src.mesh.structured import DomainKind, DomainSpec, build_mesh


def test_convergence_csv(tmp_path):
    rows = [
        ConvergenceRow(N=4, ul2=0.1, cl2=0.1, uh1=1.0, ch1=1.0, uen=0.5, cen=0.5),
        ConvergenceRow(N=8, ul2=0.025, cl2=math.nan, uh1=0.5, ch1=math.nan, uen=0.25, cen=math.nan),
    ]
    path = write_csv(rows, tmp_path / "out" / "diffmms_deg1.csv")
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_csv(path)
    assert back[0] == rows[0]
    assert back[1].N == 8 and math.isnan(back[1].cl2)
    assert not back[1].complete


def test_read_csv_rejects_unknown_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("N,l2\n4,0.1\n")
    with pytest.raises(ValueError):
        read_csv(path)


def test_convergence_row_rejects_negative_errors():
    with pytest.raises(ValueError):
        ConvergenceRow(N=4, ul2=-1.0, cl2=0.0, uh1=0.0, ch1=0.0, uen=0.0, cen=0.0)


def test_coefficients_csv(tmp_path, space):
    f = interpolate_field(space, lambda x, y: x + y)
    lines = write_coefficients_csv(f, tmp_path / "coeffs.csv").read_text().splitlines()
    assert lines[0] == "dof,value"
    assert len(lines) == space.ndofs + 1
    dof, value = lines[1].split(",")
    assert int(dof) == 0 and float(value) == pytest.approx(f.coeffs[0])


@pytest.mark.parametrize("d", [1, 2, 3, 6])
def test_subdivision_covers_cell(d, unit_mesh):
    assert subdivision_triangles(d).shape == (d * d, 3)
    points, triangles, _ = visualization_mesh(unit_mesh, d)
    p = points[triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(1.0)


def test_vtk_linear(tmp_path, unit_mesh):
    space = build_space(unit_mesh, 1)
    u = interpolate_field(space, lambda x, y: x * y)
    lines = write_vtk(unit_mesh, {"u": u}, tmp_path / "u.vtk").read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert lines[4] == f"POINTS {unit_mesh.num_vertices} double"
    assert f"CELLS {unit_mesh.num_cells} {4 * unit_mesh.num_cells}" in lines
    assert f"CELL_TYPES {unit_mesh.num_cells}" in lines
    assert f"POINT_DATA {unit_mesh.num_vertices}" in lines
    start = lines.index("SCALARS u double 1") + 2
    values = np.array([float(v) for v in lines[start:start + unit_mesh.num_vertices]])
    assert np.allclose(values, unit_mesh.vertices[:, 0] * unit_mesh.vertices[:, 1])


def test_vtk_high_order_fields(tmp_path, unit_mesh):
    quadratic = build_space(unit_mesh, 2)
    cubic = build_space(unit_mesh, 3)
    fields = [
        ("vp", interpolate_field(quadratic, lambda x, y: x ** 2)),
        ("vi", interpolate_field(cubic, lambda x, y: y ** 3)),
    ]
    lines = write_vtk(unit_mesh, fields, tmp_path / "hi.vtk").read_text().splitlines()
    npts = unit_mesh.num_cells * 10
    assert f"POINTS {npts} double" in lines
    assert f"CELLS {9 * unit_mesh.num_cells} {36 * unit_mesh.num_cells}" in lines
    assert "SCALARS vp double 1" in lines and "SCALARS vi double 1" in lines
    cell_types = lines.index(f"CELL_TYPES {9 * unit_mesh.num_cells}")
    assert set(lines[cell_types + 1:cell_types + 1 + 9 * unit_mesh.num_cells]) == {"5"}


def test_vtk_rejects_bad_fields(tmp_path, unit_mesh):
    space = build_space(unit_mesh, 1)
    u = interpolate_field(space, lambda x, y: x)
    with pytest.raises(ValueError):
        write_vtk(unit_mesh, {"bad name": u}, tmp_path / "a.vtk")
    other = build_mesh(DomainSpec(kind=DomainKind.UNIT_SQUARE, n=2))
    with pytest.raises(ValueError):
        write_vtk(other, {"u": u}, tmp_path / "b.vtk")


def test_summary_json(tmp_path):
    summary = RunSummary(experiment=Experiment.ROUGH, degree=2, n=16, metrics={"cells": 512})
    data = json.loads(write_summary(summary, tmp_path / "s.json").read_text())
    assert data["experiment"] == "rough"
    assert data["metrics"]["cells"] == 512
    assert data["converged"] is True
