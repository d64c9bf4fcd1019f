"""Mesh package - Structured 2D triangulations and geometry queries."""

from src.mesh.structured import (
    CellGeometry,
    DegenerateCellError,
    DomainKind,
    DomainSpec,
    FacetTag,
    GeometryBatch,
    Mesh,
    build_mesh,
    cell_geometry,
    classify_inflow_outflow,
    refine_uniform,
)

__all__ = [
    "CellGeometry",
    "DegenerateCellError",
    "DomainKind",
    "DomainSpec",
    "FacetTag",
    "GeometryBatch",
    "Mesh",
    "build_mesh",
    "cell_geometry",
    "classify_inflow_outflow",
    "refine_uniform",
]
