"""Time stepping for transient convection-diffusion with optional bounds.

Each step solves one linear system, or one box VI when bounds are given:

    backward Euler:    (M + tau A) u = M u_prev + tau F(t_i)
    implicit midpoint: (M + tau/2 A) u = (M - tau/2 A) u_prev + tau F(t_{i-1/2})
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sps

from src.fem.assembly import AssembledSystem, Assembler, apply_dirichlet, as_field, FieldKind
from src.fem.space import BoundsBox, FEFunction, FunctionSpace
from src.solvers.sparse import DirectSolver, LinearSolverError, SparseMatrix
from src.solvers.vi import BoxVIProblem, solve_box_vi

logger = logging.getLogger(__name__)

BOUNDS_TOL = 1e-8

Vector = Union[FEFunction, np.ndarray]
Dirichlet = tuple[np.ndarray, np.ndarray]


class TransientSolveError(RuntimeError):
    """A time step could not be solved."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class TimeScheme(str, Enum):
    MIDPOINT = "midpoint"
    EULER = "euler"

    @property
    def theta(self) -> float:
        return 0.5 if self == TimeScheme.MIDPOINT else 1.0


@dataclass(frozen=True)
class TimeGrid:
    T: float
    tau: float
    steps: int

    def __post_init__(self):
        if self.tau <= 0 or self.steps < 1:
            raise ValueError(f"Need tau > 0 and at least one step (got tau={self.tau}, steps={self.steps})")
        if abs(self.steps * self.tau - self.T) > 1e-12 * max(1.0, abs(self.T)):
            raise ValueError(f"steps * tau = {self.steps * self.tau} does not reach T = {self.T}")

    @classmethod
    def from_final_time(cls, T: float, tau: float) -> "TimeGrid":
        """Round T / tau to the nearest step count and shrink tau to land on T."""
        if T <= 0 or tau <= 0:
            raise ValueError(f"Need T > 0 and tau > 0 (got {T}, {tau})")
        steps = max(1, int(round(T / tau)))
        return cls(T=T, tau=T / steps, steps=steps)

    def time(self, i: float) -> float:
        return i * self.tau


def _coefficients(u: Vector) -> np.ndarray:
    return u.coeffs if isinstance(u, FEFunction) else np.asarray(u, dtype=float)


def _like(u: Vector, coeffs: np.ndarray) -> Vector:
    return FEFunction(u.space, coeffs) if isinstance(u, FEFunction) else coeffs


def _solve_step(
    S: SparseMatrix,
    rhs: np.ndarray,
    x0: np.ndarray,
    bounds: Optional[BoundsBox],
    dirichlet: Optional[Dirichlet],
):
    """Solve one step system; returns (coefficients, VI report or None)."""
    if dirichlet is not None:
        dofs, values = dirichlet
        system = apply_dirichlet(AssembledSystem(S, rhs), dofs, values, symmetric=False)
        S, rhs = system.A, system.b
        if bounds is not None:
            bounds = bounds.with_fixed(dofs, values)
    if bounds is None:
        return DirectSolver(S).solve(rhs), None
    report = solve_box_vi(BoxVIProblem(S, rhs, bounds, x0))
    return report.solution, report


def theta_step(M, A, u_prev: Vector, F, tau: float, theta: float, bounds=None, dirichlet=None) -> Vector:
    """(M + theta tau A) u = (M - (1 - theta) tau A) u_prev + tau F."""
    if tau <= 0:
        raise ValueError(f"Time step must be positive (got {tau})")
    prev = _coefficients(u_prev)
    M, A = sps.csr_matrix(M), sps.csr_matrix(A)
    S = sps.csr_matrix(M + theta * tau * A)
    rhs = M @ prev - (1.0 - theta) * tau * (A @ prev)
    if F is not None:
        rhs = rhs + tau * np.asarray(F, dtype=float)
    x, _ = _solve_step(S, rhs, prev, bounds, dirichlet)
    return _like(u_prev, x)


def backward_euler_step(M, A, u_prev: Vector, F_i, tau: float, bounds=None, dirichlet=None) -> Vector:
    """Solve (M + tau A) u = M u_prev + tau F_i, as a VI when bounds are given."""
    return theta_step(M, A, u_prev, F_i, tau, 1.0, bounds, dirichlet)


def implicit_midpoint_step(M, A, u_prev: Vector, F_mid, tau: float, bounds=None, dirichlet=None) -> Vector:
    """Solve (M + tau/2 A) u = (M - tau/2 A) u_prev + tau F_mid, as a VI when bounds are given."""
    return theta_step(M, A, u_prev, F_mid, tau, 0.5, bounds, dirichlet)


@dataclass
class Snapshot:
    step: int
    time: float
    u: FEFunction


@dataclass
class Trajectory:
    """Snapshots plus per-step coefficient extrema of a transient run."""
    grid: TimeGrid
    scheme: TimeScheme
    snapshots: list[Snapshot] = field(default_factory=list)
    minima: list[float] = field(default_factory=list)
    maxima: list[float] = field(default_factory=list)
    vi_iterations: list[int] = field(default_factory=list)
    unconverged_steps: list[int] = field(default_factory=list)

    @property
    def final(self) -> FEFunction:
        return self.snapshots[-1].u

    @property
    def min_value(self) -> float:
        return min(self.minima)

    @property
    def max_value(self) -> float:
        return max(self.maxima)


def run_transient(
    space: FunctionSpace,
    kappa,
    beta,
    u0: FEFunction,
    grid: TimeGrid,
    scheme: Union[TimeScheme, str] = TimeScheme.MIDPOINT,
    bounds: Optional[BoundsBox] = None,
    snapshot_every: int = 0,
    dirichlet: Optional[Dirichlet] = None,
    forcing: Optional[Callable[[float], np.ndarray]] = None,
    on_snapshot: Optional[Callable[[Snapshot], None]] = None,
    tol: Optional[float] = None,
    parallel: Optional[bool] = None,
) -> Trajectory:
    """March u0 over the time grid with the Galerkin convection-diffusion operator.

    `forcing(t)` returns a load vector; it is evaluated at t_i for backward
    Euler and at t_{i-1/2} for the midpoint rule, and defaults to zero.
    Snapshots are taken at step 0, every `snapshot_every` steps and at the end.
    `tol` is the VI stopping tolerance for bounded runs; `parallel` is passed
    to the assembler.
    """
    scheme = TimeScheme(scheme)
    if u0.space is not space:
        raise ValueError("Initial data lives on a different space")
    if bounds is not None and bounds.violation(u0.coeffs) > BOUNDS_TOL:
        raise ValueError(f"Initial data violates the bounds by {bounds.violation(u0.coeffs):.2e}")

    assembler = Assembler(space, parallel=parallel)
    M = assembler.mass()
    A = assembler.diffusion(as_field(kappa, FieldKind.TENSOR)) + assembler.convection(as_field(beta, FieldKind.VECTOR))
    theta = scheme.theta
    S = sps.csr_matrix(M + theta * grid.tau * A)
    R = sps.csr_matrix(M - (1.0 - theta) * grid.tau * A)

    solver = None
    step_bounds = bounds
    if dirichlet is not None:
        dofs, values = dirichlet
        S = apply_dirichlet(AssembledSystem(S, np.zeros(space.ndofs)), dofs, values, symmetric=False).A
        if bounds is not None:
            step_bounds = bounds.with_fixed(dofs, values)
    if bounds is None:
        try:
            solver = DirectSolver(S)
        except LinearSolverError as err:
            raise TransientSolveError(f"Could not factorize the step matrix: {err}", step=1) from err

    trajectory = Trajectory(grid=grid, scheme=scheme)
    u = u0.copy()
    trajectory.snapshots.append(Snapshot(0, 0.0, u.copy()))
    if on_snapshot is not None:
        on_snapshot(trajectory.snapshots[0])
    report_every = max(1, grid.steps // 10)
    logger.info(f"[Transient] {scheme.value}: {grid.steps} steps of tau={grid.tau:.4g}, {space.ndofs} dofs")

    for i in range(1, grid.steps + 1):
        rhs = R @ u.coeffs
        if forcing is not None:
            rhs = rhs + grid.tau * np.asarray(forcing(grid.time(i - 1.0 + theta)), dtype=float)
        if dirichlet is not None:
            rhs[dirichlet[0]] = dirichlet[1]

        try:
            if solver is not None:
                x = solver.solve(rhs)
            else:
                report = solve_box_vi(BoxVIProblem(S, rhs, step_bounds, u.coeffs), tol=tol)
                x = report.solution
                trajectory.vi_iterations.append(report.iterations)
                if not report.converged:
                    trajectory.unconverged_steps.append(i)
                    logger.warning(f"[!] VI did not converge at step {i} (residual {report.final_residual:.2e})")
        except LinearSolverError as err:
            raise TransientSolveError(f"Linear solve failed: {err}", step=i) from err

        u = FEFunction(space, x)
        trajectory.minima.append(float(x.min()))
        trajectory.maxima.append(float(x.max()))

        if bounds is not None and bounds.violation(x) > BOUNDS_TOL:
            raise TransientSolveError(f"Iterate left the bounds by {bounds.violation(x):.2e}", step=i)

        if (snapshot_every and i % snapshot_every == 0) or i == grid.steps:
            snap = Snapshot(i, grid.time(i), u.copy())
            trajectory.snapshots.append(snap)
            if on_snapshot is not None:
                on_snapshot(snap)
        if i % report_every == 0:
            logger.info(f"[Transient] step {i}/{grid.steps}  min={x.min():.4f}  max={x.max():.4f}")

    return trajectory
