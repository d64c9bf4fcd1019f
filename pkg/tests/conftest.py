import itertools

import numpy as np
import pytest
import scipy.sparse as sps

from src.fem.space import build_space
from src.mesh.structured import DomainKind, DomainSpec, build_mesh


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance studies")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def unit_mesh():
    return build_mesh(DomainSpec(kind=DomainKind.UNIT_SQUARE, n=4))


@pytest.fixture(params=[1, 2, 3])
def space(request, unit_mesh):
    return build_space(unit_mesh, request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spd(rng, n: int) -> sps.csr_matrix:
    G = rng.standard_normal((n, n))
    return sps.csr_matrix(G @ G.T + n * np.eye(n))


def brute_force_box_qp(A, b, lb, ub) -> np.ndarray:
    """Solve min 1/2 x'Ax - b'x over the box by trying every lower/free/upper split."""
    A = A.toarray() if sps.issparse(A) else np.asarray(A)
    n = b.size
    best, best_energy = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pattern = np.array(pattern)
        if np.any((pattern == 0) & np.isneginf(lb)) or np.any((pattern == 2) & np.isposinf(ub)):
            continue
        x = np.where(pattern == 0, lb, np.where(pattern == 2, ub, 0.0))
        free = pattern == 1
        if free.any():
            fixed = ~free
            rhs = b[free] - A[np.ix_(free, fixed)] @ x[fixed]
            x[free] = np.linalg.solve(A[np.ix_(free, free)], rhs)
        if np.any(x < lb - 1e-12) or np.any(x > ub + 1e-12):
            continue
        energy = 0.5 * x @ A @ x - b @ x
        if energy < best_energy:
            best, best_energy = x, energy
    return best


@pytest.fixture
def spd_matrix():
    return random_spd


@pytest.fixture
def box_qp_oracle():
    return brute_force_box_qp
