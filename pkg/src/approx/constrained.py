"""Restricted-range approximation and the norms used to measure it.

Given g close to f in the sup norm and a target range [m, M] for f, the
affine contraction

    q = mbar + s (g - mbar),   s = (M - m) / (M - m + 2 ||f - g||_inf)

takes values in [m, M] and satisfies ||f - q||_inf <= 2 ||f - g||_inf. The
map is applied to Bernstein coefficients, which is exact because the basis
is a partition of unity.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.config import config
from src.fem.assembly import Assembler, CoefficientField, FieldKind, as_field
from src.fem.bernstein import bernstein_lattice, tabulate_reference
from src.fem.quadrature import MAX_EXACTNESS
from src.fem.space import FEFunction, FunctionSpace, sample
from src.solvers.sparse import DirectSolver

logger = logging.getLogger(__name__)

Norm = Union[int, float, str]


class RangeInterval(BaseModel):
    """Closed interval [lower, upper] a function should take values in."""
    lower: float
    upper: float

    @model_validator(mode="after")
    def _ordered(self) -> "RangeInterval":
        if self.upper < self.lower:
            raise ValueError(f"Empty range: upper {self.upper} < lower {self.lower}")
        return self

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower


class NormReport(BaseModel):
    linf: float = Field(ge=0)
    l2: float = Field(ge=0)
    h1_semi: float = Field(ge=0)
    energy: float = Field(ge=0)
    sampling_points_per_cell: int = Field(ge=1)


def contraction_factor(interval: RangeInterval, err_inf: float) -> float:
    if err_inf < 0:
        raise ValueError(f"Sup-norm error bound must be nonnegative (got {err_inf})")
    denom = interval.width + 2.0 * err_inf
    return 1.0 if denom == 0 else interval.width / denom


def restricted_range_approximation(g: FEFunction, interval: RangeInterval, err_inf: float) -> FEFunction:
    """Contract g towards the interval midpoint so its range fits the interval."""
    s = contraction_factor(interval, err_inf)
    mbar = interval.mid
    return FEFunction(g.space, mbar + s * (g.coeffs - mbar))


# -- sampling -----------------------------------------------------------------

def _lattice_degree(k: int, points_per_cell: Optional[int]) -> int:
    degree = config.SAMPLING_DENSITY_FACTOR * k
    if points_per_cell is not None:
        while (degree + 1) * (degree + 2) // 2 < points_per_cell:
            degree += 1
    return degree


def sampling_lattice(k: int, points_per_cell: Optional[int] = None) -> np.ndarray:
    """Barycentric sampling lattice with FACTOR*k + 1 points per edge (or more)."""
    return bernstein_lattice(_lattice_degree(k, points_per_cell))


def sample_cells(g: FEFunction, bary: np.ndarray) -> np.ndarray:
    """Values of g at the barycentric points of every cell: (C, P)."""
    values = tabulate_reference(g.space.degree, bary).values
    return g.space.cell_values(g.coeffs, values)


def sampled_range(g: FEFunction, points_per_cell: Optional[int] = None) -> tuple[float, float]:
    values = sample_cells(g, sampling_lattice(g.space.degree, points_per_cell))
    return float(values.min()), float(values.max())


def sup_norm_estimate(f: Callable, g: FEFunction, points_per_cell: Optional[int] = None) -> float:
    """max |f - g| over a dense per-cell lattice.

    Sampling can miss the true maximum, so this is a lower bound for the sup norm.
    """
    bary = sampling_lattice(g.space.degree, points_per_cell)
    pts = g.space.physical_points(bary)
    diff = sample(f, pts[..., 0], pts[..., 1]) - sample_cells(g, bary)
    return float(np.max(np.abs(diff)))


# -- quadrature norms ---------------------------------------------------------

def _error_integrals(
    space: FunctionSpace,
    coeffs: np.ndarray,
    exact: Callable,
    exact_grad: Optional[Callable],
    kappa: Optional[CoefficientField],
) -> np.ndarray:
    """Per-norm integrals [int e^2, int |grad e|^2, int K grad e . grad e]."""
    assembler = Assembler(space, exactness=min(2 * space.degree + 4, MAX_EXACTNESS))
    B = assembler.ref.values

    def kernel(cells):
        x, y = assembler.points(cells)
        W = assembler.weights(cells)
        local = coeffs[space.cell_dofs[cells]]
        e = sample(exact, x, y) - local @ B
        out = np.zeros((cells.size, 3))
        out[:, 0] = np.einsum("cq,cq->c", W, e * e)
        if exact_grad is not None:
            uh_grad = np.einsum("cb,cbqd->cqd", local, assembler.gradients(cells))
            ge = np.broadcast_to(np.asarray(exact_grad(x, y), dtype=float), x.shape + (2,)) - uh_grad
            out[:, 1] = np.einsum("cq,cqd,cqd->c", W, ge, ge)
            if kappa is not None:
                out[:, 2] = np.einsum("cq,cqd,cqde,cqe->c", W, ge, kappa.as_tensor(x, y), ge)
        return out

    return assembler.map_cells(kernel).sum(axis=0)


def l2_error(space: FunctionSpace, coeffs: np.ndarray, exact: Callable) -> float:
    return float(np.sqrt(max(_error_integrals(space, coeffs, exact, None, None)[0], 0.0)))


def error_norms(
    space: FunctionSpace,
    u_h: FEFunction,
    exact: Callable,
    exact_grad: Callable,
    kappa=1.0,
    points_per_cell: Optional[int] = None,
) -> NormReport:
    """L2, H1-seminorm and energy errors by quadrature, plus a sampled sup norm."""
    kappa = as_field(kappa, FieldKind.TENSOR)
    l2, h1, energy = np.sqrt(np.maximum(_error_integrals(space, u_h.coeffs, exact, exact_grad, kappa), 0.0))
    degree = _lattice_degree(space.degree, points_per_cell)
    return NormReport(
        linf=sup_norm_estimate(exact, u_h, points_per_cell),
        l2=float(l2),
        h1_semi=float(h1),
        energy=float(energy),
        sampling_points_per_cell=(degree + 1) * (degree + 2) // 2,
    )


# -- inverse estimate ---------------------------------------------------------

def _is_inf(p: Norm) -> bool:
    return p in ("inf", "infinity") or (isinstance(p, float) and np.isinf(p))


def inverse_constant_probe(
    space: FunctionSpace,
    p: Norm = 2,
    trials: int = 20,
    seed: int = 0,
    power_iterations: int = 25,
) -> float:
    """Empirical lower bound for C_I in ||grad q||_p <= (C_I / h) ||q||_p.

    Candidates are random coefficient vectors and single basis functions; for
    p = 2 they are also pushed through generalized power iterations of the
    stiffness/mass pencil. h is the largest cell diameter.
    """
    if not (p == 2 or _is_inf(p)):
        raise ValueError(f"Inverse probe supports p = 2 or p = inf, not {p}")
    rng = np.random.default_rng(seed)
    h = space.mesh.max_diameter
    n = space.ndofs

    candidates = [rng.standard_normal(n) for _ in range(trials)]
    for dof in rng.choice(n, size=min(trials, n), replace=False):
        unit = np.zeros(n)
        unit[dof] = 1.0
        candidates.append(unit)

    if p == 2:
        assembler = Assembler(space)
        M = assembler.mass()
        K = assembler.diffusion(CoefficientField.constant(1.0))
        mass_solver = DirectSolver(M)

        def ratio(x):
            mx = x @ (M @ x)
            return 0.0 if mx <= 0 else h * np.sqrt(max(x @ (K @ x), 0.0) / mx)

        best = max(ratio(x) for x in candidates)
        x = candidates[0]
        for _ in range(power_iterations):
            x = mass_solver.solve(K @ x)
            x /= np.linalg.norm(x)
            best = max(best, ratio(x))
        return float(best)

    bary = sampling_lattice(space.degree)
    ref = tabulate_reference(space.degree, bary, order=1)
    grads = ref.gradients(space.mesh.geometry.grad_bary)  # (C, nb, P, 2)
    best = 0.0
    for x in candidates:
        local = x[space.cell_dofs]
        values = local @ ref.values
        grad = np.einsum("cb,cbpd->cpd", local, grads)
        denom = np.max(np.abs(values))
        if denom > 0:
            best = max(best, h * np.max(np.linalg.norm(grad, axis=-1)) / denom)
    return float(best)


def _zero(x, y):
    return np.zeros_like(x)


def _zero_grad(x, y):
    return np.zeros(np.shape(x) + (2,))


@dataclass
class DerivativeBoundReport:
    """Both sides of ||grad(f - q)|| <= ||grad(f - g)|| + (C/h) ||f - g|| in L2.

    C = C_I (1 + 2 |K|^(1/2) ||f - g||_inf / ||f - g||_2), the inverse constant
    times the factor that bounds ||g - q||_2 by ||f - g||_2 through the sup norm.
    """
    lhs: float
    rhs: float
    grad_error_g: float
    l2_error_g: float
    l2_error_q: float
    inverse_constant: float
    l2_factor: float
    constant: float
    realized_ratio: float
    h: float
    scale: float
    err_inf: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-14


def derivative_bound_check(
    f: Callable,
    grad_f: Callable,
    g: FEFunction,
    interval: RangeInterval,
    inverse_constant: Optional[float] = None,
) -> DerivativeBoundReport:
    """Build q from g and evaluate both sides of the gradient error bound.

    `inverse_constant` defaults to the estimated L2 inverse constant of g's
    space. The realized ratio h ||grad(g - q)|| / ||g - q|| is reported but
    not used in the bound.
    """
    space = g.space
    h = space.mesh.max_diameter
    err_inf = sup_norm_estimate(f, g)
    q = restricted_range_approximation(g, interval, err_inf)
    c_inv = inverse_constant_probe(space, 2) if inverse_constant is None else inverse_constant
    if c_inv < 0:
        raise ValueError(f"Inverse constant must be nonnegative (got {c_inv})")

    _, grad_q_err, _ = np.sqrt(np.maximum(_error_integrals(space, q.coeffs, f, grad_f, None), 0.0))
    l2_g, grad_g_err, _ = np.sqrt(np.maximum(_error_integrals(space, g.coeffs, f, grad_f, None), 0.0))
    l2_q = l2_error(space, q.coeffs, f)

    l2_d, grad_d, _ = np.sqrt(np.maximum(
        _error_integrals(space, g.coeffs - q.coeffs, _zero, _zero_grad, None), 0.0
    ))
    realized = h * grad_d / l2_d if l2_d > 0 else 0.0

    # ||f - q||_2 <= |K|^(1/2) ||f - q||_inf <= 2 |K|^(1/2) ||f - g||_inf
    chain = 2.0 * np.sqrt(space.mesh.geometry.areas.sum()) * err_inf
    l2_factor = 1.0 + chain / l2_g if l2_g > 0 else 1.0
    constant = c_inv * l2_factor

    report = DerivativeBoundReport(
        lhs=float(grad_q_err),
        rhs=float(grad_g_err + constant / h * l2_g),
        grad_error_g=float(grad_g_err),
        l2_error_g=float(l2_g),
        l2_error_q=float(l2_q),
        inverse_constant=float(c_inv),
        l2_factor=float(l2_factor),
        constant=float(constant),
        realized_ratio=float(realized),
        h=h,
        scale=contraction_factor(interval, err_inf),
        err_inf=err_inf,
    )
    if not report.holds:
        logger.warning(f"[!] Gradient bound violated: {report.lhs:.3e} > {report.rhs:.3e}")
    return report
