"""Randomized property suite for the restricted-range approximation."""

import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from src.approx.constrained import (
    RangeInterval,
    derivative_bound_check,
    inverse_constant_probe,
    restricted_range_approximation,
    sampled_range,
    sampling_lattice,
    sup_norm_estimate,
)
from src.fem.bernstein import coefficient_box_certificate, univariate_bernstein
from src.fem.space import FEFunction, FunctionSpace, build_space, interpolate_field, sample
from src.mesh.structured import DomainKind, DomainSpec, build_mesh

logger = logging.getLogger(__name__)

SLACK = 1e-10
MAX_POLY_DEGREE = 5
# p(x) = B0 - 0.9 B1 + B2 on [0, 1]: negative coefficient, minimum 0.05 at x = 1/2
NEGATIVE_COEFFICIENT_FIXTURE = (1.0, -0.9, 1.0)


class ApproxCheckResult(BaseModel):
    trials: int
    range_failures: int = 0
    bound_failures: int = 0
    derivative_failures: int = 0
    worst_ratio: float = Field(default=0.0, description="max ||f-q||_inf / ||f-g||_inf")
    fixture_certificate: bool
    fixture_minimum: float
    inverse_constants: dict[int, float] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (
            self.range_failures == 0
            and self.bound_failures == 0
            and self.derivative_failures == 0
            and not self.fixture_certificate
            and abs(self.fixture_minimum - 0.05) <= 1e-12
        )


def random_polynomial(rng: np.random.Generator, degree: int = MAX_POLY_DEGREE):
    """Random bivariate polynomial of total degree <= degree with its gradient."""
    powers = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    coeffs = rng.standard_normal(len(powers)) / (1.0 + np.arange(len(powers)))

    def f(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return sum(c * x ** i * y ** j for c, (i, j) in zip(coeffs, powers))

    def grad(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = sum(c * i * x ** max(i - 1, 0) * y ** j for c, (i, j) in zip(coeffs, powers) if i > 0)
        gy = sum(c * j * x ** i * y ** max(j - 1, 0) for c, (i, j) in zip(coeffs, powers) if j > 0)
        return np.stack(np.broadcast_arrays(gx + 0 * x, gy + 0 * x), axis=-1)

    return f, grad


def sampled_field_range(space: FunctionSpace, f) -> RangeInterval:
    pts = space.physical_points(sampling_lattice(space.degree))
    values = sample(f, pts[..., 0], pts[..., 1])
    return RangeInterval(lower=float(values.min()), upper=float(values.max()))


def check_pair(f, g: FEFunction) -> tuple[bool, bool, float]:
    """(range ok, 2x bound ok, ratio) for one target/approximant pair."""
    interval = sampled_field_range(g.space, f)
    err = sup_norm_estimate(f, g)
    q = restricted_range_approximation(g, interval, err)
    lo, hi = sampled_range(q)
    range_ok = lo >= interval.lower - SLACK and hi <= interval.upper + SLACK
    err_q = sup_norm_estimate(f, q)
    bound_ok = err_q <= 2.0 * err + SLACK
    return range_ok, bound_ok, (err_q / err if err > 0 else 0.0)


def fixture_minimum(samples: int = 1001) -> tuple[bool, float]:
    """Certificate verdict and sampled minimum of the negative-coefficient quadratic."""
    x = np.linspace(0.0, 1.0, samples)
    p = sum(c * univariate_bernstein(2, i, x) for i, c in enumerate(NEGATIVE_COEFFICIENT_FIXTURE))
    return coefficient_box_certificate(NEGATIVE_COEFFICIENT_FIXTURE, 0.0, np.inf), float(p.min())


def run_approx_check(
    trials: int = 100,
    seed: int = 0,
    n: int = 4,
    derivative_trials: Optional[int] = None,
) -> ApproxCheckResult:
    """Check range and sup-norm bounds on random pairs, then the gradient bound per degree."""
    rng = np.random.default_rng(seed)
    spaces = {k: build_space(build_mesh(DomainSpec(kind=DomainKind.UNIT_SQUARE, n=n)), k) for k in (1, 2, 3)}
    certificate, minimum = fixture_minimum()
    result = ApproxCheckResult(trials=trials, fixture_certificate=certificate, fixture_minimum=minimum)

    for t in range(trials):
        space = spaces[int(rng.integers(1, 4))]
        f, _ = random_polynomial(rng)
        g = interpolate_field(space, f)
        g.coeffs += 0.05 * rng.standard_normal(space.ndofs)
        range_ok, bound_ok, ratio = check_pair(f, g)
        result.range_failures += not range_ok
        result.bound_failures += not bound_ok
        result.worst_ratio = max(result.worst_ratio, ratio)
        if not (range_ok and bound_ok):
            logger.warning(f"[!] trial {t}: range_ok={range_ok} bound_ok={bound_ok}")

    per_degree = derivative_trials if derivative_trials is not None else max(1, min(trials, 20))
    for k, space in spaces.items():
        constant = inverse_constant_probe(space, 2, seed=seed)
        result.inverse_constants[k] = constant
        for _ in range(per_degree):
            f, grad = random_polynomial(rng, degree=3)
            g = interpolate_field(space, f)
            g.coeffs += 0.01 * rng.standard_normal(space.ndofs)
            interval = sampled_field_range(space, f)
            report = derivative_bound_check(f, grad, g, interval, inverse_constant=constant)
            result.derivative_failures += not report.holds

    logger.info(
        f"[*] approx-check: {trials} pairs, worst ratio {result.worst_ratio:.3f}, "
        f"failures range={result.range_failures} bound={result.bound_failures} "
        f"gradient={result.derivative_failures}"
    )
    return result
