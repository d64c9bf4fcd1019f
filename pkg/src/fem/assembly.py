"""Global assembly of mass, diffusion, convection and SUPG systems.

Local matrices are computed for blocks of cells at once with einsum over a
shared reference tabulation, then scattered into CSR through triplets. Cell
blocks may be evaluated on a thread pool; results are always concatenated
in cell order, so the assembled matrix does not depend on the worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sps

from src.config import config
from src.fem.bernstein import tabulate_reference, univariate_bernstein
from src.fem.quadrature import MAX_EXACTNESS, line_rule, quadrature_rule
from src.fem.space import BoundsBox, FunctionSpace, edge_dofs, sample
from src.mesh.structured import FacetTag
from src.solvers.sparse import SparseMatrix, from_triplets, is_symmetric

logger = logging.getLogger(__name__)

BETA_FLOOR = 1e-12


class FieldKind(str, Enum):
    SCALAR = "scalar"
    VECTOR = "vector2"
    TENSOR = "tensor2x2"


_VALUE_SHAPES = {FieldKind.SCALAR: (), FieldKind.VECTOR: (2,), FieldKind.TENSOR: (2, 2)}


@dataclass(frozen=True)
class CoefficientField:
    """A scalar, vector or 2x2 tensor field evaluated pointwise.

    `fn(x, y)` receives arrays of equal shape S and returns S, S+(2,) or
    S+(2, 2). For tensors used in SUPG, `div(x, y)` returns the column
    divergence (d_j K_j0, d_j K_j1) with shape S+(2,).
    """
    kind: FieldKind
    fn: Callable
    div: Optional[Callable] = None
    name: str = ""
    is_constant: bool = False

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        value = np.asarray(self.fn(x, np.asarray(y, dtype=float)), dtype=float)
        return np.broadcast_to(value, x.shape + _VALUE_SHAPES[self.kind])

    def as_tensor(self, x, y) -> np.ndarray:
        """Values as 2x2 tensors; scalars become multiples of the identity."""
        value = self(x, y)
        if self.kind == FieldKind.TENSOR:
            return value
        if self.kind == FieldKind.SCALAR:
            return value[..., None, None] * np.eye(2)
        raise ValueError(f"A vector field cannot act as a diffusion tensor ({self.name or 'unnamed'})")

    def divergence(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.div is None:
            if self.is_constant:
                return np.zeros(x.shape + (2,))
            raise ValueError(f"Field {self.name or 'unnamed'} has no divergence; SUPG needs one")
        return np.broadcast_to(np.asarray(self.div(x, np.asarray(y, dtype=float)), dtype=float), x.shape + (2,))

    @classmethod
    def constant(cls, value) -> "CoefficientField":
        value = np.asarray(value, dtype=float)
        kind = {(): FieldKind.SCALAR, (2,): FieldKind.VECTOR, (2, 2): FieldKind.TENSOR}.get(value.shape)
        if kind is None:
            raise ValueError(f"Unsupported constant coefficient shape {value.shape}")
        return cls(kind=kind, fn=lambda x, y: value, name=str(value.tolist()), is_constant=True)

    @classmethod
    def scalar(cls, fn: Callable, name: str = "") -> "CoefficientField":
        return cls(kind=FieldKind.SCALAR, fn=fn, name=name)

    @classmethod
    def vector(cls, fn: Callable, name: str = "") -> "CoefficientField":
        return cls(kind=FieldKind.VECTOR, fn=fn, name=name)

    @classmethod
    def tensor(cls, fn: Callable, div: Optional[Callable] = None, name: str = "") -> "CoefficientField":
        return cls(kind=FieldKind.TENSOR, fn=fn, div=div, name=name)


Coefficient = Union[CoefficientField, float]


def as_field(value, kind: FieldKind = FieldKind.SCALAR) -> CoefficientField:
    """Wrap constants and plain callables as coefficient fields."""
    if isinstance(value, CoefficientField):
        return value
    if callable(value):
        return CoefficientField(kind=kind, fn=value)
    return CoefficientField.constant(value)


@dataclass
class AssembledSystem:
    """Matrix and right-hand side, plus any strongly imposed Dirichlet data."""
    A: SparseMatrix
    b: np.ndarray
    dirichlet_dofs: np.ndarray = dc_field(default_factory=lambda: np.empty(0, dtype=int))
    dirichlet_values: np.ndarray = dc_field(default_factory=lambda: np.empty(0))

    @property
    def size(self) -> int:
        return self.b.size

    def bounds(self, lower: float = -np.inf, upper: float = np.inf) -> BoundsBox:
        """Uniform box with lb = ub = g on the Dirichlet dofs."""
        box = BoundsBox.uniform(self.size, lower, upper)
        if self.dirichlet_dofs.size:
            box = box.with_fixed(self.dirichlet_dofs, self.dirichlet_values)
        return box


class Assembler:
    """Cell-block assembler for one function space and quadrature rule."""

    def __init__(
        self,
        space: FunctionSpace,
        exactness: Optional[int] = None,
        parallel: Optional[bool] = None,
        chunk: Optional[int] = None,
        workers: Optional[int] = None,
    ):
        self.space = space
        k = space.degree
        self.rule = quadrature_rule(min(exactness if exactness is not None else 2 * k + 2, MAX_EXACTNESS))
        self.ref = tabulate_reference(k, self.rule.points, order=2)
        self.parallel = config.PARALLEL_ASSEMBLY if parallel is None else parallel
        self.chunk = chunk or config.ASSEMBLY_CHUNK
        self.workers = workers or config.ASSEMBLY_WORKERS
        self._geometry = space.mesh.geometry

    # -- cell-block helpers ---------------------------------------------------

    def _blocks(self) -> list[np.ndarray]:
        n = self.space.mesh.num_cells
        return [np.arange(s, min(s + self.chunk, n)) for s in range(0, n, self.chunk)]

    def map_cells(self, kernel: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        blocks = self._blocks()
        if self.parallel and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(kernel, blocks))
        else:
            parts = [kernel(cells) for cells in blocks]
        return np.concatenate(parts, axis=0)

    def points(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Physical quadrature points (c, nq) x and y."""
        verts = self.space.mesh.vertices[self.space.mesh.cells[cells]]
        p = np.einsum("qi,cid->cqd", self.rule.points, verts)
        return p[..., 0], p[..., 1]

    def weights(self, cells: np.ndarray) -> np.ndarray:
        """Physical quadrature weights (c, nq)."""
        return 2.0 * self._geometry.areas[cells, None] * self.rule.weights[None, :]

    def gradients(self, cells: np.ndarray) -> np.ndarray:
        return self.ref.gradients(self._geometry.grad_bary[cells])  # (c, nb, nq, 2)

    def hessians(self, cells: np.ndarray) -> np.ndarray:
        return self.ref.hessians(self._geometry.grad_bary[cells])   # (c, nb, nq, 2, 2)

    def matrix(self, local: np.ndarray) -> SparseMatrix:
        dofs = self.space.cell_dofs
        nb = dofs.shape[1]
        rows = np.broadcast_to(dofs[:, :, None], (dofs.shape[0], nb, nb))
        cols = np.broadcast_to(dofs[:, None, :], (dofs.shape[0], nb, nb))
        n = self.space.ndofs
        return from_triplets((n, n), rows, cols, local)

    def vector(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.space.cell_dofs.ravel(), weights=local.ravel(), minlength=self.space.ndofs)

    # -- kernels --------------------------------------------------------------

    def mass_block(self, cells: np.ndarray) -> np.ndarray:
        B = self.ref.values
        return np.einsum("cq,aq,bq->cab", self.weights(cells), B, B, optimize=True)

    def diffusion_block(self, cells: np.ndarray, kappa: CoefficientField) -> np.ndarray:
        x, y = self.points(cells)
        G = self.gradients(cells)
        KG = np.einsum("cqde,cbqe->cbqd", kappa.as_tensor(x, y), G)
        return np.einsum("cq,caqd,cbqd->cab", self.weights(cells), G, KG, optimize=True)

    def convection_block(self, cells: np.ndarray, beta: CoefficientField) -> np.ndarray:
        x, y = self.points(cells)
        bg = np.einsum("cqd,cbqd->cbq", beta(x, y), self.gradients(cells))
        return np.einsum("cq,aq,cbq->cab", self.weights(cells), self.ref.values, bg, optimize=True)

    def load_block(self, cells: np.ndarray, f: Callable) -> np.ndarray:
        x, y = self.points(cells)
        return np.einsum("cq,aq,cq->ca", self.weights(cells), self.ref.values, sample(f, x, y), optimize=True)

    def supg_block(
        self,
        cells: np.ndarray,
        kappa: CoefficientField,
        beta: CoefficientField,
        f: Callable,
        delta: Optional[float],
    ) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.points(cells)
        W = self.weights(cells)
        B = self.ref.values
        G = self.gradients(cells)
        H = self.hessians(cells)
        K = kappa.as_tensor(x, y)
        bv = beta(x, y)
        fv = sample(f, x, y)

        bg = np.einsum("cqd,cbqd->cbq", bv, G)
        # strong operator of each trial function: beta.grad u - div(K grad u)
        strong = bg - np.einsum("cqd,cbqd->cbq", kappa.divergence(x, y), G) \
            - np.einsum("cqde,cbqde->cbq", K, H)
        if delta is None:
            speed = np.maximum(np.linalg.norm(bv, axis=-1), BETA_FLOOR)
            tau = self._geometry.diameters[cells, None] / (2.0 * speed)
        else:
            tau = np.full_like(W, float(delta))

        KG = np.einsum("cqde,cbqe->cbqd", K, G)
        local = np.einsum("cq,caqd,cbqd->cab", W, G, KG, optimize=True)
        local += np.einsum("cq,aq,cbq->cab", W, B, bg, optimize=True)
        local += np.einsum("cq,cq,caq,cbq->cab", W, tau, bg, strong, optimize=True)
        load = np.einsum("cq,aq,cq->ca", W, B, fv, optimize=True)
        load += np.einsum("cq,cq,cq,caq->ca", W, tau, fv, bg, optimize=True)
        return local, load

    # -- global operators -----------------------------------------------------

    def mass(self) -> SparseMatrix:
        return self.matrix(self.map_cells(self.mass_block))

    def diffusion(self, kappa: CoefficientField) -> SparseMatrix:
        return self.matrix(self.map_cells(lambda cells: self.diffusion_block(cells, kappa)))

    def convection(self, beta: CoefficientField) -> SparseMatrix:
        return self.matrix(self.map_cells(lambda cells: self.convection_block(cells, beta)))

    def load(self, f: Callable) -> np.ndarray:
        return self.vector(self.map_cells(lambda cells: self.load_block(cells, f)))

    def supg(self, kappa, beta, f, delta=None) -> tuple[SparseMatrix, np.ndarray]:
        nb = self.space.num_basis

        def kernel(cells):
            local, load = self.supg_block(cells, kappa, beta, f, delta)
            return np.concatenate([local, load[:, :, None]], axis=2)

        packed = self.map_cells(kernel)
        return self.matrix(packed[:, :, :nb]), self.vector(packed[:, :, nb])


def assemble_mass(space: FunctionSpace, **options) -> SparseMatrix:
    """M_ab = int B_a B_b."""
    return Assembler(space, **options).mass()


def assemble_diffusion(space: FunctionSpace, kappa: Coefficient, **options) -> SparseMatrix:
    """K_ab = int (kappa grad B_b) . grad B_a for scalar or tensor kappa."""
    return Assembler(space, **options).diffusion(as_field(kappa, FieldKind.TENSOR))


def assemble_convection(space: FunctionSpace, beta, **options) -> SparseMatrix:
    """C_ab = int (beta . grad B_b) B_a."""
    return Assembler(space, **options).convection(as_field(beta, FieldKind.VECTOR))


def assemble_supg(
    space: FunctionSpace,
    kappa: Coefficient,
    beta,
    f: Callable,
    delta: Optional[float] = None,
    **options,
) -> AssembledSystem:
    """Galerkin convection-diffusion plus streamline-diffusion stabilization.

    The stabilization parameter is h / (2 |beta|) per quadrature point unless
    a constant `delta` is given. The returned matrix is generally nonsymmetric.
    """
    kappa = as_field(kappa, FieldKind.TENSOR)
    beta = as_field(beta, FieldKind.VECTOR)
    A, b = Assembler(space, **options).supg(kappa, beta, f, delta)
    logger.debug(f"[Assembly] SUPG system with {space.ndofs} dofs, nnz={A.nnz}")
    return AssembledSystem(A=A, b=b)


NeumannData = tuple[FacetTag, Callable]


def assemble_load(
    space: FunctionSpace,
    f: Callable,
    neumann: Optional[Union[NeumannData, Sequence[NeumannData]]] = None,
    neumann_sign: float = 1.0,
    exactness: Optional[int] = None,
) -> np.ndarray:
    """b_a = int f B_a, plus neumann_sign * int_G gamma B_a over tagged facets."""
    b = Assembler(space, exactness=exactness).load(f)
    if neumann is None:
        return b
    if isinstance(neumann, tuple) and len(neumann) == 2 and not isinstance(neumann[0], tuple):
        neumann = [neumann]
    for tag, gamma in neumann:
        b += neumann_sign * _boundary_load(space, FacetTag(tag), gamma)
    return b


def _boundary_load(space: FunctionSpace, tag: FacetTag, gamma: Callable) -> np.ndarray:
    mesh = space.mesh
    facets = mesh.facets_with_tags([tag])
    if facets.size == 0:
        raise ValueError(f"No boundary facets carry tag '{tag.value}'")
    k = space.degree
    s, w = line_rule(2 * k + 2)
    edges = mesh.facet_edges[facets]
    ends = mesh.edges[edges]
    pa, pb = mesh.vertices[ends[:, 0]], mesh.vertices[ends[:, 1]]
    pts = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    lengths = np.linalg.norm(pb - pa, axis=1)
    g = sample(gamma, pts[..., 0], pts[..., 1])                           # (F, nq)
    basis = np.stack([univariate_bernstein(k, i, s) for i in range(k + 1)])  # (k+1, nq)
    local = np.einsum("f,q,fq,iq->fi", lengths, w, g, basis)
    return np.bincount(edge_dofs(space, edges).ravel(), weights=local.ravel(), minlength=space.ndofs)


def apply_dirichlet(
    system: AssembledSystem,
    dofs: np.ndarray,
    values,
    symmetric: Optional[bool] = None,
) -> AssembledSystem:
    """Impose u = g strongly on the given dofs.

    Symmetric matrices keep their symmetry: constrained rows and columns are
    zeroed, the diagonal set to one and the right-hand side lifted. Otherwise
    the rows are replaced by identity rows. Reapplying the same data leaves
    the system unchanged.
    """
    dofs = np.asarray(dofs, dtype=int)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape).copy()
    A = sps.csr_matrix(system.A)
    b = np.array(system.b, dtype=float)
    n = b.size
    if symmetric is None:
        symmetric = is_symmetric(A)

    g = np.zeros(n)
    g[dofs] = values
    fixed = np.zeros(n, dtype=bool)
    fixed[dofs] = True
    keep = sps.diags((~fixed).astype(float))
    ident = sps.diags(fixed.astype(float))

    if symmetric:
        b = b - A @ g
        A = keep @ A @ keep + ident
    else:
        A = keep @ A + ident
    b[fixed] = g[fixed]
    A = sps.csr_matrix(A)
    A.eliminate_zeros()
    A.sort_indices()

    all_dofs = np.union1d(system.dirichlet_dofs, dofs)
    merged = np.zeros(n)
    merged[system.dirichlet_dofs] = system.dirichlet_values
    merged[dofs] = values
    return AssembledSystem(A=A, b=b, dirichlet_dofs=all_dofs, dirichlet_values=merged[all_dofs])


def assemble_galerkin(
    space: FunctionSpace,
    kappa: Coefficient,
    f: Callable,
    beta=None,
    **options,
) -> AssembledSystem:
    """Unstabilized diffusion (plus optional convection) system with its load."""
    assembler = Assembler(space, **options)
    A = assembler.diffusion(as_field(kappa, FieldKind.TENSOR))
    if beta is not None:
        A = A + assembler.convection(as_field(beta, FieldKind.VECTOR))
    return AssembledSystem(A=sps.csr_matrix(A), b=assembler.load(f))
