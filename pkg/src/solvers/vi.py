"""Reduced-space active-set solver for box-constrained linear variational inequalities.

Find x in [lb, ub] with (A x - b) . (y - x) >= 0 for every y in the box. For a
box this is the complementarity system r_i = 0 on free dofs, r_i >= 0 where
x_i = lb_i and r_i <= 0 where x_i = ub_i, with r = A x - b.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from src.config import config
from src.fem.assembly import AssembledSystem, apply_dirichlet, assemble_load, assemble_mass
from src.fem.space import BoundsBox, FEFunction, FunctionSpace
from src.solvers.sparse import (
    SparseMatrix,
    extract_submatrix,
    is_symmetric,
    solve_linear,
)

logger = logging.getLogger(__name__)

ENERGY_SLACK = 1e-13
FEASIBILITY_TOL = 1e-12


@dataclass
class BoxVIProblem:
    A: SparseMatrix
    b: np.ndarray
    bounds: BoundsBox
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.A.shape[0]
        self.b = np.asarray(self.b, dtype=float)
        if self.A.shape != (n, n) or self.b.shape != (n,) or self.bounds.size != n:
            raise ValueError(
                f"Inconsistent VI dimensions: A {self.A.shape}, b {self.b.shape}, bounds {self.bounds.size}"
            )
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if x0.shape != (n,):
            raise ValueError(f"Initial guess has shape {x0.shape}, expected ({n},)")
        self.x0 = self.bounds.clamp(x0)


@dataclass
class IterationRecord:
    """One line of the solver log."""
    iteration: int
    residual: float
    active_lower: int
    active_upper: int
    step: float
    energy: Optional[float] = None


@dataclass
class VISolveReport:
    solution: np.ndarray
    iterations: int
    final_residual: float
    active_lower: np.ndarray
    active_upper: np.ndarray
    converged: bool
    history: list[IterationRecord] = field(default_factory=list)


def projected_residual(A: SparseMatrix, b: np.ndarray, bounds: BoundsBox, x: np.ndarray) -> np.ndarray:
    """pi = min(x - lb, max(x - ub, A x - b)); zero exactly at a solution."""
    r = A @ x - b
    return _projected(x, r, bounds)


def _projected(x: np.ndarray, r: np.ndarray, bounds: BoundsBox) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return np.minimum(x - bounds.lb, np.maximum(x - bounds.ub, r))


def _energy(A: SparseMatrix, b: np.ndarray, x: np.ndarray) -> float:
    return float(0.5 * x @ (A @ x) - b @ x)


def _classify(x: np.ndarray, r: np.ndarray, bounds: BoundsBox, eps: float) -> tuple[np.ndarray, np.ndarray]:
    pinned = bounds.lb == bounds.ub
    lower = ((x <= bounds.lb + eps) & (r > 0)) | pinned
    upper = (x >= bounds.ub - eps) & (r < 0) & ~lower
    return lower, upper


def solve_box_vi(
    problem: BoxVIProblem,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> VISolveReport:
    """Active-set Newton iteration with a safeguarded step.

    Active sets are rebuilt from scratch every iteration. Symmetric systems
    only accept steps that do not raise the quadratic energy; nonsymmetric
    ones halve the step until the projected residual decreases. Running out
    of iterations returns a report with converged=False.
    """
    tol = config.VI_TOL if tol is None else tol
    max_iter = config.VI_MAX_ITER if max_iter is None else max_iter
    if tol <= 0 or max_iter < 0:
        raise ValueError(f"Need tol > 0 and max_iter >= 0 (got {tol}, {max_iter})")

    A, b, bounds = problem.A, problem.b, problem.bounds
    eps = config.VI_ACTIVE_TOL
    symmetric = is_symmetric(A)
    x = problem.x0.copy()
    history: list[IterationRecord] = []
    step = 0.0

    for it in range(max_iter + 1):
        r = A @ x - b
        pi = _projected(x, r, bounds)
        res = float(np.max(np.abs(pi), initial=0.0))
        lower, upper = _classify(x, r, bounds, eps)
        energy = _energy(A, b, x) if symmetric else None
        history.append(IterationRecord(it, res, int(lower.sum()), int(upper.sum()), step, energy))
        logger.debug(f"[VI] it={it} residual={res:.3e} lower={lower.sum()} upper={upper.sum()}")

        if res <= tol:
            return VISolveReport(x, it, res, np.flatnonzero(lower), np.flatnonzero(upper), True, history)
        if it == max_iter:
            break

        x, step = _newton_step(A, b, bounds, x, lower, upper, symmetric)

    logger.warning(f"[!] VI solver stopped after {max_iter} iterations (residual {res:.3e} > {tol:.0e})")
    return VISolveReport(x, max_iter, res, np.flatnonzero(lower), np.flatnonzero(upper), False, history)


def _newton_step(A, b, bounds, x, lower, upper, symmetric) -> tuple[np.ndarray, float]:
    base = x.copy()
    base[lower] = bounds.lb[lower]
    base[upper] = bounds.ub[upper]
    free = np.flatnonzero(~(lower | upper))

    direction = np.zeros_like(x)
    if free.size:
        r = A @ base - b
        direction[free] = solve_linear(extract_submatrix(A, free, free), -r[free])

    def trial(t: float) -> np.ndarray:
        return bounds.clamp(base + t * direction)

    if symmetric:
        e0 = _energy(A, b, x)
        slack = ENERGY_SLACK * (1.0 + abs(e0))
        t = 1.0
        for _ in range(config.VI_MAX_HALVINGS + 1):
            candidate = trial(t)
            if _energy(A, b, candidate) <= e0 + slack:
                return candidate, t
            t *= 0.5
        # Newton step rejected: fall back to a damped projected gradient step
        g = A @ x - b
        curvature = float(g @ (A @ g))
        s = (g @ g) / curvature if curvature > 0 else 1.0
        for _ in range(config.VI_MAX_HALVINGS + 1):
            candidate = bounds.clamp(x - s * g)
            if _energy(A, b, candidate) <= e0 + slack:
                logger.debug("[VI] Newton step rejected; took projected gradient step")
                return candidate, 0.0
            s *= 0.5
        return x, 0.0

    merit0 = np.linalg.norm(_projected(x, A @ x - b, bounds))
    t = 1.0
    for _ in range(config.VI_MAX_HALVINGS + 1):
        candidate = trial(t)
        if np.linalg.norm(_projected(candidate, A @ candidate - b, bounds)) < merit0:
            return candidate, t
        t *= 0.5
    return trial(1.0), 1.0


def solve_vp(A: SparseMatrix, b: np.ndarray) -> np.ndarray:
    """Unconstrained variational problem; Dirichlet rows are already in A and b."""
    return solve_linear(A, b)


def write_iteration_log(report: VISolveReport, path) -> Path:
    """Write the iteration history as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "residual", "active_lower", "active_upper", "step", "energy"])
        for rec in report.history:
            writer.writerow([
                rec.iteration,
                f"{rec.residual:.17g}",
                rec.active_lower,
                rec.active_upper,
                f"{rec.step:.6g}",
                "" if rec.energy is None else f"{rec.energy:.17g}",
            ])
    return path


def is_feasible(x: np.ndarray, bounds: BoundsBox, tol: float = FEASIBILITY_TOL) -> bool:
    return bounds.violation(x) <= tol


def constrained_l2_projection(
    space: FunctionSpace,
    target,
    bounds: BoundsBox,
    dirichlet: Optional[tuple[np.ndarray, np.ndarray]] = None,
    tol: Optional[float] = None,
) -> tuple[FEFunction, VISolveReport]:
    """Closest member of the coefficient box to `target` in L2.

    Returns (FEFunction, VISolveReport). Dirichlet data, if given, is imposed
    strongly and pinned through lb = ub.
    """
    system = AssembledSystem(A=assemble_mass(space), b=assemble_load(space, target))
    if dirichlet is not None:
        dofs, values = dirichlet
        system = apply_dirichlet(system, dofs, values, symmetric=True)
        bounds = bounds.with_fixed(dofs, values)
    x0 = solve_linear(system.A, system.b)
    report = solve_box_vi(BoxVIProblem(system.A, system.b, bounds, x0), tol=tol)
    logger.info(
        f"[VI] constrained L2 projection: {report.iterations} iterations, "
        f"{report.active_lower.size} at lower / {report.active_upper.size} at upper bound"
    )
    return FEFunction(space, report.solution), report
