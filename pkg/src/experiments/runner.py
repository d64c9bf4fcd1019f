"""Experiment drivers: manufactured-solution convergence, rough forcing,
stabilized transport around a hole and the rotating cone."""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.approx.constrained import error_norms, l2_error
from src.benchmarks.problems import (
    ProblemDefinition,
    mms_diffusion,
    rotating_cone,
    rough_diffusion,
    supg_benchmark,
)
from src.config import config
from src.experiments.schema import (
    ConvergenceRow,
    Experiment,
    FieldStats,
    RunSummary,
    SolverKind,
)
from src.experiments.writers import write_coefficients_csv, write_csv, write_summary, write_vtk
from src.fem.assembly import AssembledSystem, apply_dirichlet, assemble_galerkin, assemble_supg
from src.fem.space import BoundsBox, FEFunction, FunctionSpace, build_space
from src.mesh.structured import build_mesh, refine_uniform
from src.solvers.time_integrator import Snapshot, TimeGrid, TimeScheme, run_transient
from src.solvers.vi import BoxVIProblem, VISolveReport, constrained_l2_projection, solve_box_vi, solve_vp

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-8
SUPG_BASE_N = 72
# hole-domain meshes of comparable resolution used elsewhere for this benchmark
REFERENCE_MESH_STATS = {0: (5440, 2832), 1: (21760, 11104)}


@dataclass
class StationaryResult:
    space: FunctionSpace
    system: AssembledSystem
    vp: Optional[FEFunction] = None
    vi: Optional[FEFunction] = None
    report: Optional[VISolveReport] = None

    @property
    def converged(self) -> bool:
        return self.report is None or self.report.converged


def build_problem_space(problem: ProblemDefinition, degree: int, refine: int = 0) -> FunctionSpace:
    mesh = build_mesh(problem.domain)
    for _ in range(refine):
        mesh = refine_uniform(mesh)
    return build_space(mesh, degree)


def solve_stationary(
    problem: ProblemDefinition,
    space: FunctionSpace,
    solver: SolverKind = SolverKind.BOTH,
    tol: Optional[float] = None,
    parallel: Optional[bool] = None,
) -> StationaryResult:
    """Assemble (SUPG when the problem convects) and solve as VP and/or VI."""
    if problem.beta is not None:
        system = assemble_supg(space, problem.kappa, problem.beta, problem.f, parallel=parallel)
        symmetric = False
    else:
        system = assemble_galerkin(space, problem.kappa, problem.f, parallel=parallel)
        symmetric = True
    dofs, values = problem.dirichlet_data(space)
    system = apply_dirichlet(system, dofs, values, symmetric=symmetric)
    result = StationaryResult(space=space, system=system)

    kinds = SolverKind(solver).kinds
    if SolverKind.VP in kinds:
        result.vp = FEFunction(space, solve_vp(system.A, system.b))
    if SolverKind.VI in kinds:
        bounds = system.bounds(problem.lower, problem.upper)
        x0 = result.vp.coeffs if result.vp is not None else None
        report = solve_box_vi(BoxVIProblem(system.A, system.b, bounds, x0), tol=tol)
        result.vi = FEFunction(space, report.solution)
        result.report = report
        if report.converged and bounds.violation(report.solution) > FEASIBILITY_TOL:
            raise RuntimeError(f"VI solution leaves its box by {bounds.violation(report.solution):.2e}")
        logger.info(
            f"[VI] {problem.name} k={space.degree}: {report.iterations} iterations, "
            f"residual {report.final_residual:.2e}, converged={report.converged}"
        )
    return result


def _stats(name: str, f: FEFunction) -> FieldStats:
    return FieldStats(name=name, min=float(f.coeffs.min()), max=float(f.coeffs.max()), ndofs=f.space.ndofs)


def _solved_fields(result: StationaryResult) -> dict[str, FEFunction]:
    """Whichever of vp/vi were computed, plus their difference when both were."""
    fields = {name: f for name, f in (("vp", result.vp), ("vi", result.vi)) if f is not None}
    if len(fields) == 2:
        fields["difference"] = FEFunction(result.space, result.vp.coeffs - result.vi.coeffs)
    return fields


# -- manufactured solutions ---------------------------------------------------

def mms_row(degree: int, n: int, tol: Optional[float] = None, parallel: Optional[bool] = None) -> ConvergenceRow:
    """VP and VI errors for one (degree, N); VI entries are NaN when the solver fails."""
    problem = mms_diffusion(n=n)
    space = build_problem_space(problem, degree)
    result = solve_stationary(problem, space, SolverKind.BOTH, tol, parallel)
    vp = error_norms(space, result.vp, problem.exact, problem.exact_grad, problem.kappa)
    if result.converged:
        vi = error_norms(space, result.vi, problem.exact, problem.exact_grad, problem.kappa)
        cl2, ch1, cen = vi.l2, vi.h1_semi, vi.energy
    else:
        cl2 = ch1 = cen = math.nan
    logger.info(f"[*] mms k={degree} N={n}: VP L2={vp.l2:.3e}, VI L2={cl2:.3e}")
    return ConvergenceRow(N=n, ul2=vp.l2, cl2=cl2, uh1=vp.h1_semi, ch1=ch1, uen=vp.energy, cen=cen)


@dataclass
class MMSStudyResult:
    tables: dict[int, list[ConvergenceRow]] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(row.complete for rows in self.tables.values() for row in rows)


def estimated_orders(rows: Sequence[ConvergenceRow], column: str) -> list[float]:
    """log2 error ratios between consecutive rows (N doubling)."""
    out = []
    for coarse, fine in zip(rows, rows[1:]):
        a, b = getattr(coarse, column), getattr(fine, column)
        out.append(math.log(a / b) / math.log(fine.N / coarse.N) if a > 0 and b > 0 else math.nan)
    return out


async def _gather_rows(cases, tol, parallel, jobs: int) -> list[ConvergenceRow]:
    loop = asyncio.get_running_loop()
    limit = asyncio.Semaphore(jobs)

    async def run(degree, n):
        async with limit:
            return await loop.run_in_executor(None, mms_row, degree, n, tol, parallel)

    tasks = [run(degree, n) for degree, n in cases]
    return await asyncio.gather(*tasks)


async def run_mms_study_async(
    degrees: Sequence[int] = (1, 2, 3),
    ns: Sequence[int] = (4, 8, 16, 32, 64),
    out_dir=None,
    tol: Optional[float] = None,
    jobs: int = 1,
    parallel: Optional[bool] = None,
) -> MMSStudyResult:
    """Independent (degree, N) runs fan out over the default executor."""
    cases = [(k, n) for k in degrees for n in ns]
    rows = await _gather_rows(cases, tol, parallel, jobs)
    result = MMSStudyResult()
    for (k, _), row in zip(cases, rows):
        result.tables.setdefault(k, []).append(row)

    out = Path(out_dir or config.OUTPUT_DIR)
    for k, table in result.tables.items():
        result.files.append(write_csv(table, out / f"diffmms_deg{k}.csv"))
        orders = estimated_orders(table, "ul2")
        if orders:
            logger.info(f"[*] k={k} observed VP L2 orders: {', '.join(f'{o:.2f}' for o in orders)}")
    return result


def run_mms_study(
    degrees: Sequence[int] = (1, 2, 3),
    ns: Sequence[int] = (4, 8, 16, 32, 64),
    out_dir=None,
    tol: Optional[float] = None,
    jobs: int = 1,
    parallel: Optional[bool] = None,
) -> MMSStudyResult:
    """Write diffmms_deg{k}.csv for every requested degree."""
    return asyncio.run(run_mms_study_async(degrees, ns, out_dir, tol, jobs, parallel))


# -- rough forcing ------------------------------------------------------------

def run_rough_forcing(
    degree: int,
    n: int = 16,
    out_dir=None,
    tol: Optional[float] = None,
    parallel: Optional[bool] = None,
    solver: SolverKind = SolverKind.BOTH,
) -> RunSummary:
    """VP and/or VI for the indicator forcing, with their difference when both run."""
    problem = rough_diffusion(n=n)
    space = build_problem_space(problem, degree)
    result = solve_stationary(problem, space, solver, tol, parallel)
    fields = _solved_fields(result)

    out = Path(out_dir or config.OUTPUT_DIR)
    stem = f"rough_deg{degree}_n{n}"
    summary = RunSummary(
        experiment=Experiment.ROUGH,
        degree=degree,
        n=n,
        converged=result.converged,
        fields=[_stats(name, f) for name, f in fields.items()],
        vi_iterations=result.report.iterations if result.report else None,
    )
    files = [write_vtk(space.mesh, fields, out / f"{stem}.vtk")]
    for kind in SolverKind(solver).kinds:
        files.append(write_coefficients_csv(fields[kind.value], out / f"{stem}_{kind.value}.csv"))
    summary.files = [str(p) for p in files]
    write_summary(summary, out / f"{stem}.json")
    return summary


# -- stabilized transport -----------------------------------------------------

def run_supg_benchmark(
    degree: int,
    refine: int = 0,
    out_dir=None,
    tol: Optional[float] = None,
    parallel: Optional[bool] = None,
    solver: SolverKind = SolverKind.BOTH,
) -> RunSummary:
    """SUPG VP and box-constrained VI around the hole; refine=1 halves h."""
    if refine not in REFERENCE_MESH_STATS:
        raise ValueError(f"refine must be 0 or 1 (got {refine})")
    problem = supg_benchmark(n=SUPG_BASE_N)
    space = build_problem_space(problem, degree, refine)
    result = solve_stationary(problem, space, solver, tol, parallel)
    fields = _solved_fields(result)

    cells, verts = REFERENCE_MESH_STATS[refine]
    summary = RunSummary(
        experiment=Experiment.SUPG,
        degree=degree,
        n=SUPG_BASE_N * 2 ** refine,
        converged=result.converged,
        fields=[_stats(name, f) for name, f in fields.items()],
        metrics={"cells": space.mesh.num_cells, "vertices": space.mesh.num_vertices},
        notes=[f"reference unstructured mesh for this level: {cells} triangles, {verts} vertices"],
    )
    if result.report is not None:
        summary.vi_iterations = result.report.iterations
        summary.metrics["vi_final_residual"] = result.report.final_residual
    if not result.converged:
        summary.notes.append("VI solver did not converge; solution is the last iterate")

    out = Path(out_dir or config.OUTPUT_DIR)
    stem = f"supg_deg{degree}_refine{refine}"
    path = write_vtk(space.mesh, fields, out / f"{stem}.vtk")
    summary.files = [str(path)]
    write_summary(summary, out / f"{stem}.json")
    return summary


# -- rotating cone ------------------------------------------------------------

def run_rotating_cone(
    degree: int,
    n: int = 32,
    out_dir=None,
    tol: Optional[float] = None,
    scheme: TimeScheme = TimeScheme.MIDPOINT,
    solver: SolverKind = SolverKind.BOTH,
    snapshot_every: int = 0,
    final_time: float = 2.0 * math.pi,
    parallel: Optional[bool] = None,
) -> RunSummary:
    """One rotation of the cone with tau = 1/N, starting from its box-constrained L2 projection."""
    problem = rotating_cone(n=n)
    space = build_problem_space(problem, degree)
    dirichlet = problem.dirichlet_data(space)
    box = BoundsBox.uniform(space.ndofs, problem.lower, problem.upper)
    u0, projection = constrained_l2_projection(space, problem.initial, box, dirichlet, tol=tol)
    grid = TimeGrid.from_final_time(final_time, 1.0 / n)
    out = Path(out_dir or config.OUTPUT_DIR)
    stem = f"cone_deg{degree}_n{n}"

    summary = RunSummary(
        experiment=Experiment.CONE,
        degree=degree,
        n=n,
        converged=projection.converged,
        fields=[_stats("initial", u0)],
        metrics={"steps": grid.steps, "tau": grid.tau, "scheme": TimeScheme(scheme).value},
    )
    finals = {"initial": u0}
    for kind in SolverKind(solver).kinds:
        def snapshot_writer(snap: Snapshot, kind=kind):
            write_vtk(space.mesh, {kind.value: snap.u}, out / f"{stem}_{kind.value}_{snap.step:05d}.vtk")

        trajectory = run_transient(
            space,
            problem.kappa,
            problem.beta,
            u0,
            grid,
            scheme=scheme,
            bounds=box if kind == SolverKind.VI else None,
            snapshot_every=snapshot_every,
            dirichlet=dirichlet,
            on_snapshot=snapshot_writer if snapshot_every else None,
            tol=tol,
            parallel=parallel,
        )
        final = trajectory.final
        finals[kind.value] = final
        summary.fields.append(_stats(kind.value, final))
        summary.metrics[f"{kind.value}_l2_error"] = l2_error(space, final.coeffs, problem.initial)
        summary.metrics[f"{kind.value}_min_over_steps"] = trajectory.min_value
        summary.metrics[f"{kind.value}_max_over_steps"] = trajectory.max_value
        if trajectory.unconverged_steps:
            summary.converged = False
            summary.notes.append(f"VI did not converge at {len(trajectory.unconverged_steps)} steps")
        if trajectory.vi_iterations:
            summary.vi_iterations = int(sum(trajectory.vi_iterations))

    path = write_vtk(space.mesh, finals, out / f"{stem}.vtk")
    summary.files = [str(path)]
    write_summary(summary, out / f"{stem}.json")
    return summary
