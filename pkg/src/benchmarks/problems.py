"""Closed-form data for the four benchmark problems.

Coefficients and manufactured forcing are derived symbolically with sympy
and compiled to vectorized numpy callables, so the forcing carries no
discretization error of its own.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import sympy as sp

from src.fem.assembly import CoefficientField
from src.fem.space import BoundsBox, FunctionSpace, dirichlet_dofs
from src.mesh.structured import DomainKind, DomainSpec, FacetTag

MMS_EPSILON = 1e-4
ALPHA_L = 1e-1
ALPHA_T = 1e-5
D_M = 1e-9
BETA_GUARD = 1e-12
CONE_KAPPA = 1e-4
CONE_CENTER = (0.225, 0.0)
CONE_RADIUS = 0.1
ROUGH_SUPPORT = (3.0 / 8.0, 5.0 / 8.0)

X, Y = sp.symbols("x y", real=True)


@dataclass
class ProblemDefinition:
    """Everything needed to set up and assess one benchmark."""
    name: str
    domain: DomainSpec
    kappa: CoefficientField
    f: Callable
    beta: Optional[CoefficientField] = None
    dirichlet: dict[FacetTag, float] = field(default_factory=dict)
    exact: Optional[Callable] = None
    exact_grad: Optional[Callable] = None
    lower: float = -np.inf
    upper: float = np.inf
    initial: Optional[Callable] = None

    @property
    def has_exact(self) -> bool:
        return self.exact is not None

    @property
    def is_bounded(self) -> bool:
        return np.isfinite(self.lower) or np.isfinite(self.upper)

    def dirichlet_data(self, space: FunctionSpace) -> tuple[np.ndarray, np.ndarray]:
        """Boundary dofs and their values; tags are applied in insertion order."""
        values = np.zeros(space.ndofs)
        dofs = []
        for tag, value in self.dirichlet.items():
            tagged = dirichlet_dofs(space, [tag])
            values[tagged] = value
            dofs.append(tagged)
        all_dofs = np.unique(np.concatenate(dofs)) if dofs else np.empty(0, dtype=int)
        return all_dofs, values[all_dofs]

    def bounds(self, space: FunctionSpace) -> Optional[BoundsBox]:
        if not self.is_bounded:
            return None
        return BoundsBox.uniform(space.ndofs, self.lower, self.upper)


# -- sympy helpers ------------------------------------------------------------

def _compile(expr: sp.Expr) -> Callable:
    fn = sp.lambdify((X, Y), expr, modules="numpy")

    def evaluate(x, y):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fn(x, np.asarray(y, dtype=float)), dtype=float), x.shape)

    return evaluate


def _compile_vector(exprs) -> Callable:
    parts = [_compile(e) for e in exprs]

    def evaluate(x, y):
        return np.stack([p(x, y) for p in parts], axis=-1)

    return evaluate


def _compile_matrix(matrix: sp.Matrix) -> Callable:
    parts = [[_compile(matrix[i, j]) for j in range(2)] for i in range(2)]

    def evaluate(x, y):
        rows = [np.stack([parts[i][j](x, y) for j in range(2)], axis=-1) for i in range(2)]
        return np.stack(rows, axis=-2)

    return evaluate


def column_divergence(matrix: sp.Matrix) -> list[sp.Expr]:
    """(d_x K_00 + d_y K_10, d_x K_01 + d_y K_11)."""
    return [sp.diff(matrix[0, j], X) + sp.diff(matrix[1, j], Y) for j in range(2)]


def mms_kappa_expr(eps: float = MMS_EPSILON) -> sp.Matrix:
    e = sp.nsimplify(eps)
    return sp.Matrix([
        [Y ** 2 + e * X ** 2, -(1 - e) * X * Y],
        [-(1 - e) * X * Y, X ** 2 + e * Y ** 2],
    ])


@lru_cache(maxsize=None)
def _mms_kappa_field(eps: float) -> CoefficientField:
    K = mms_kappa_expr(eps)
    return CoefficientField.tensor(_compile_matrix(K), div=_compile_vector(column_divergence(K)), name="mms-kappa")


@lru_cache(maxsize=None)
def _mms_solution(eps: float):
    u = sp.exp(2 * X * Y) * sp.sin(sp.pi * X) ** 2 * sp.sin(2 * sp.pi * Y) ** 2
    grad = sp.Matrix([sp.diff(u, X), sp.diff(u, Y)])
    flux = mms_kappa_expr(eps) * grad
    f = -(sp.diff(flux[0], X) + sp.diff(flux[1], Y))
    return _compile(u), _compile_vector(list(grad)), _compile(f), [_compile(c) for c in flux]


def mms_flux(eps: float = MMS_EPSILON) -> Callable:
    """Closed-form kappa grad u* (used to cross-check the forcing)."""
    parts = _mms_solution(eps)[3]
    return lambda x, y: np.stack([p(x, y) for p in parts], axis=-1)


def mms_diffusion(eps: float = MMS_EPSILON, n: int = 4) -> ProblemDefinition:
    """Anisotropic diffusion with exact solution e^{2xy} sin^2(pi x) sin^2(2 pi y)."""
    exact, grad, forcing, _ = _mms_solution(eps)
    return ProblemDefinition(
        name="mms_diffusion",
        domain=DomainSpec(kind=DomainKind.UNIT_SQUARE, n=n),
        kappa=_mms_kappa_field(eps),
        f=forcing,
        dirichlet={FacetTag.EXTERIOR: 0.0},
        exact=exact,
        exact_grad=grad,
        lower=0.0,
    )


def rough_forcing(x, y):
    lo, hi = ROUGH_SUPPORT
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return ((x >= lo) & (x <= hi) & (y >= lo) & (y <= hi)).astype(float)


def rough_diffusion(eps: float = MMS_EPSILON, n: int = 16) -> ProblemDefinition:
    """Same diffusion tensor, forcing the indicator of [3/8, 5/8]^2; needs n % 8 == 0."""
    if n % 8:
        raise ValueError(f"Rough forcing needs n divisible by 8 so the jump follows cell edges (got {n})")
    return ProblemDefinition(
        name="rough_diffusion",
        domain=DomainSpec(kind=DomainKind.UNIT_SQUARE, n=n),
        kappa=_mms_kappa_field(eps),
        f=rough_forcing,
        dirichlet={FacetTag.EXTERIOR: 0.0},
        lower=0.0,
    )


# -- convection-dominated transport around a hole -----------------------------

def benchmark_velocity_expr() -> list[sp.Expr]:
    return [sp.cos(sp.pi * Y ** 2), sp.sin(2 * sp.pi * X) + sp.cos(2 * sp.pi * X ** 2)]


def dispersion_tensor_expr(alpha_l=ALPHA_L, alpha_t=ALPHA_T, d_m=D_M) -> sp.Matrix:
    b = sp.Matrix(benchmark_velocity_expr())
    speed = sp.sqrt(b[0] ** 2 + b[1] ** 2)
    return (sp.nsimplify(alpha_t) * speed + sp.nsimplify(d_m)) * sp.eye(2) \
        + (sp.nsimplify(alpha_l) - sp.nsimplify(alpha_t)) * (b * b.T) / speed


@lru_cache(maxsize=None)
def _supg_fields(alpha_l: float, alpha_t: float, d_m: float) -> tuple[CoefficientField, CoefficientField]:
    velocity = _compile_vector(benchmark_velocity_expr())
    divergence = _compile_vector(column_divergence(dispersion_tensor_expr(alpha_l, alpha_t, d_m)))

    def kappa(x, y):
        b = velocity(x, y)
        speed = np.linalg.norm(b, axis=-1)
        safe = np.maximum(speed, BETA_GUARD)[..., None, None]
        outer = b[..., :, None] * b[..., None, :]
        K = (alpha_t * speed + d_m)[..., None, None] * np.eye(2) + (alpha_l - alpha_t) * outer / safe
        return np.where((speed < BETA_GUARD)[..., None, None], d_m * np.eye(2), K)

    def kappa_div(x, y):
        speed = np.linalg.norm(velocity(x, y), axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            d = divergence(x, y)
        return np.where((speed < BETA_GUARD)[..., None], 0.0, d)

    return (
        CoefficientField.tensor(kappa, div=kappa_div, name="dispersion"),
        CoefficientField.vector(velocity, name="benchmark-velocity"),
    )


def supg_benchmark(n: int = 72, alpha_l=ALPHA_L, alpha_t=ALPHA_T, d_m=D_M) -> ProblemDefinition:
    """Dispersion-dominated transport; u = 0 outside, u = 1 on the hole."""
    kappa, beta = _supg_fields(alpha_l, alpha_t, d_m)
    return ProblemDefinition(
        name="supg_benchmark",
        domain=DomainSpec(kind=DomainKind.SQUARE_WITH_HOLE, n=n),
        kappa=kappa,
        beta=beta,
        f=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        dirichlet={FacetTag.EXTERIOR: 0.0, FacetTag.HOLE: 1.0},
        lower=0.0,
        upper=1.0,
    )


# -- rotating cone ------------------------------------------------------------

def cone(x, y, center=CONE_CENTER, radius=CONE_RADIUS):
    """Linear cone of height 1: max(0, 1 - r / radius)."""
    r = np.hypot(np.asarray(x, dtype=float) - center[0], np.asarray(y, dtype=float) - center[1])
    return np.maximum(0.0, 1.0 - r / radius)


def rigid_rotation(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.stack([-y, x], axis=-1)


def rotating_cone(n: int = 32) -> ProblemDefinition:
    """Cone carried once around the origin by beta = (-y, x) with light diffusion."""
    return ProblemDefinition(
        name="rotating_cone",
        domain=DomainSpec(kind=DomainKind.CENTERED_SQUARE, n=n),
        kappa=CoefficientField.constant(CONE_KAPPA),
        beta=CoefficientField.vector(rigid_rotation, name="rigid-rotation"),
        f=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        dirichlet={FacetTag.EXTERIOR: 0.0},
        lower=0.0,
        upper=1.0,
        initial=cone,
    )
