"""Discrete mass, spatial, lower-order, and memory operators.

The spatial operator uses centered differences.  With periodic wrap the
difference matrix along each axis is an antisymmetric circulant; with the
acoustic pressure-release closure the pressure rows use antisymmetric
ghost cells and the velocity rows symmetric ones, which makes the two
one-sided difference matrices exact negative transposes of each other.
Either way the assembled operator satisfies <Pu, v> = -<u, Pv> to the
last bit, which is what the discrete energy argument needs.

Memory operators come in two flavors: Prony sums of decaying exponentials
with an O(1)-per-step recursion that is exact for piecewise-linear input,
and tabulated kernels integrated by the trapezoid rule (the brute-force
oracle path).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    GridMismatchError,
    InvalidArgumentError,
    InvalidCoefficientError,
    UnsupportedConfigurationError,
)
from .fields import (
    CoefficientField,
    Grid,
    MemoryKernel,
    PronyKernel,
    TabulatedKernel,
    ZeroKernel,
)


def block_diagonal(blocks: np.ndarray) -> sp.bsr_matrix:
    """Block-diagonal sparse matrix from per-cell (n, k, k) blocks."""
    n, k, _ = blocks.shape
    return sp.bsr_matrix(
        (np.ascontiguousarray(blocks), np.arange(n), np.arange(n + 1)),
        shape=(n * k, n * k),
    )


# ---------------------------------------------------------------------------
# mass operator
# ---------------------------------------------------------------------------


class MassOperator:
    """Block-diagonal symmetric positive definite mass operator.

    Stores one k-by-k block per cell together with cached inverses so
    ``solve`` is a per-cell matrix product.
    """

    def __init__(self, blocks: np.ndarray, grid: Grid, k: int):
        self.blocks = blocks
        self.grid = grid
        self.k = k
        self._inv = np.linalg.inv(blocks)
        eigs = np.linalg.eigvalsh(blocks)
        self.eig_lo = float(eigs.min())
        self.eig_hi = float(eigs.max())

    @property
    def n_state(self) -> int:
        return self.grid.state_size(self.k)

    def apply(self, u: np.ndarray) -> np.ndarray:
        v = u.reshape(-1, self.grid.n_cells, self.k)
        return np.einsum("cij,scj->sci", self.blocks, v).reshape(u.shape)

    def solve(self, u: np.ndarray) -> np.ndarray:
        v = u.reshape(-1, self.grid.n_cells, self.k)
        return np.einsum("cij,scj->sci", self._inv, v).reshape(u.shape)

    def as_matrix(self) -> sp.bsr_matrix:
        return block_diagonal(self.blocks)


def assemble_mass(f: CoefficientField) -> MassOperator:
    """Mass operator from the a-part of a field.

    Raises if any cell block fails symmetry or positive definiteness,
    naming the cell.
    """
    asym = np.abs(f.a - np.swapaxes(f.a, 1, 2)).max(axis=(1, 2))
    if asym.max() > 1e-12 * max(1.0, float(np.abs(f.a).max())):
        raise InvalidCoefficientError(f"non-symmetric mass block in cell {int(asym.argmax())}")
    mins = np.linalg.eigvalsh(f.a).min(axis=1)
    if mins.min() <= 0:
        raise InvalidCoefficientError(
            f"non-SPD mass block in cell {int(mins.argmin())} (eigenvalue {mins.min():.3e})"
        )
    return MassOperator(f.a, f.grid, f.k)


def energy(mass: MassOperator, u: np.ndarray) -> float:
    """Quadratic energy E = (1/2) <u, A u> in the volume-weighted inner product."""
    if u.shape != (mass.n_state,):
        raise InvalidArgumentError(f"state length {u.shape} does not match {mass.n_state}")
    return 0.5 * mass.grid.cell_volume * float(u @ mass.apply(u))


# ---------------------------------------------------------------------------
# skew-symmetric spatial operator
# ---------------------------------------------------------------------------

PERIODIC = "periodic"
ACOUSTIC_FREE = "acoustic_free"


def acoustic_p_matrices(dim: int) -> list[np.ndarray]:
    """Symbol matrices of the (negative) grad-div pair: state (p, v_1..v_d)."""
    k = dim + 1
    mats = []
    for j in range(dim):
        p = np.zeros((k, k))
        p[0, 1 + j] = -1.0
        p[1 + j, 0] = -1.0
        mats.append(p)
    return mats


def _centered_periodic(n: int, h: float) -> sp.csr_matrix:
    i = np.arange(n)
    rows = np.concatenate([i, i])
    cols = np.concatenate([(i + 1) % n, (i - 1) % n])
    vals = np.concatenate([np.full(n, 0.5 / h), np.full(n, -0.5 / h)])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _centered_ghost(n: int, h: float, kind: str) -> sp.csr_matrix:
    """Centered difference with one-sided closures from ghost-cell reflection.

    kind="anti": antisymmetric extension (value mirrors with a sign flip
    across the wall face) -- the pressure rows of the acoustic closure.
    kind="sym": symmetric extension -- the matching-velocity rows.
    The two satisfy D_sym^T = -D_anti exactly.
    """
    m = sp.lil_matrix((n, n))
    c = 0.5 / h
    for i in range(1, n - 1):
        m[i, i + 1] = c
        m[i, i - 1] = -c
    if kind == "anti":
        m[0, 0] = c
        m[0, 1] = c
        m[n - 1, n - 1] = -c
        m[n - 1, n - 2] = -c
    elif kind == "sym":
        m[0, 0] = -c
        m[0, 1] = c
        m[n - 1, n - 1] = c
        m[n - 1, n - 2] = -c
    else:
        raise InvalidArgumentError(f"unknown ghost kind {kind!r}")
    return m.tocsr()


def _axis_operator(grid: Grid, axis: int, mat1d: sp.spmatrix) -> sp.csr_matrix:
    """Lift a 1D cell-difference matrix to the full C-ordered cell grid."""
    op = sp.identity(1, format="csr")
    for a in range(grid.dim):
        block = mat1d if a == axis else sp.identity(grid.shape[a], format="csr")
        op = sp.kron(op, block, format="csr")
    return op


@dataclass(frozen=True)
class SkewOperator:
    """Sparse discretization of p(grad) with exact matrix antisymmetry."""

    matrix: sp.csr_matrix
    p_matrices: tuple[np.ndarray, ...]
    boundary: str
    grid: Grid
    k: int

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    @property
    def n_state(self) -> int:
        return self.grid.state_size(self.k)


def assemble_skew(
    p_matrices: Sequence[np.ndarray],
    grid: Grid,
    boundary: str = PERIODIC,
    k: int | None = None,
) -> SkewOperator:
    """Assemble the centered-difference spatial operator.

    ``p_matrices`` are the constant symmetric k-by-k symbol matrices, one
    per axis.  The acoustic_free closure is only defined for the acoustic
    block structure (state = pressure followed by velocities).
    """
    p_matrices = [np.asarray(p, dtype=float) for p in p_matrices]
    if len(p_matrices) != grid.dim:
        raise InvalidArgumentError(f"expected {grid.dim} symbol matrices")
    k = p_matrices[0].shape[0] if k is None else k
    for j, p in enumerate(p_matrices):
        if p.shape != (k, k):
            raise InvalidArgumentError(f"symbol matrix {j} has shape {p.shape}, expected {(k, k)}")
        if np.abs(p - p.T).max() > 0:
            raise InvalidArgumentError(f"symbol matrix {j} is not symmetric")

    if boundary == PERIODIC:
        total = sp.csr_matrix((grid.state_size(k), grid.state_size(k)))
        for axis, p in enumerate(p_matrices):
            d = _axis_operator(grid, axis, _centered_periodic(grid.shape[axis], grid.h[axis]))
            total = total + sp.kron(d, sp.csr_matrix(p), format="csr")
    elif boundary == ACOUSTIC_FREE:
        if k != grid.dim + 1 or any(
            np.abs(p - ap).max() > 0 for p, ap in zip(p_matrices, acoustic_p_matrices(grid.dim))
        ):
            raise UnsupportedConfigurationError(
                "acoustic_free closure is defined only for the acoustic grad-div "
                f"structure with k = dim + 1 (got k = {k}, dim = {grid.dim})"
            )
        total = sp.csr_matrix((grid.state_size(k), grid.state_size(k)))
        for axis in range(grid.dim):
            d_anti = _axis_operator(grid, axis, _centered_ghost(grid.shape[axis], grid.h[axis], "anti"))
            d_sym = _axis_operator(grid, axis, _centered_ghost(grid.shape[axis], grid.h[axis], "sym"))
            e_pv = sp.csr_matrix(([-1.0], ([0], [1 + axis])), shape=(k, k))
            e_vp = sp.csr_matrix(([-1.0], ([1 + axis], [0])), shape=(k, k))
            total = total + sp.kron(d_sym, e_pv, format="csr") + sp.kron(d_anti, e_vp, format="csr")
    else:
        raise InvalidArgumentError(f"unknown boundary {boundary!r}")
    total.sum_duplicates()
    return SkewOperator(matrix=total, p_matrices=tuple(p_matrices), boundary=boundary, grid=grid, k=k)


def export_coo(skew: SkewOperator, path) -> None:
    """Write the spatial operator as 'row col value' text for external checks."""
    coo = skew.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


# ---------------------------------------------------------------------------
# memory operator
# ---------------------------------------------------------------------------


def exp_interval_weights(length: float, tau: float) -> tuple[float, float, float]:
    """Decay and endpoint weights of one exponential-convolution interval.

    Returns (E, w_old, w_new) with E = exp(-length/tau) such that for u
    linear on the interval with endpoint values (u_old, u_new),

        integral_0^length exp(-(length - s)/tau) u(s) ds
            = w_old * u_old + w_new * u_new,

    exactly.  Series fallbacks keep the weights accurate for length << tau.
    """
    alpha = length / tau
    e = np.exp(-alpha)
    if alpha < 1e-4:
        i1 = length * (0.5 - alpha / 6.0 + alpha**2 / 24.0 - alpha**3 / 120.0)
        i0 = length * (1.0 - alpha / 2.0 + alpha**2 / 6.0 - alpha**3 / 24.0)
    else:
        i0 = length * (1.0 - e) / alpha
        i1 = length * (alpha - 1.0 + e) / alpha**2
    return float(e), float(i0 - i1), float(i1)


def prony_advance(
    aux: Sequence[np.ndarray],
    u_prev: np.ndarray,
    u_next: np.ndarray,
    dt: float,
    taus: Sequence[float],
) -> list[np.ndarray]:
    """Advance the scalar-exponential auxiliary states one step.

    Each state carries s_j(t) = integral_0^t exp(-(t-s)/tau_j) u(s) ds; the
    update integrates the linear interpolant of u exactly, so for piecewise
    linear input the recursion reproduces the convolution with no quadrature
    error.
    """
    if any(t <= 0 for t in taus):
        raise InvalidArgumentError("relaxation times must be positive")
    out = []
    for s, tau in zip(aux, taus):
        e, w_old, w_new = exp_interval_weights(dt, tau)
        out.append(e * s + w_old * u_prev + w_new * u_next)
    return out


@dataclass(frozen=True)
class MemoryOperator:
    """Convolution operator R[u](t) = integral q(t - s) u(s) ds on the grid.

    The operator itself is stateless; time steppers own whatever auxiliary
    recursion state they need.  ``quadrature`` records how the kernel is
    integrated ("recursive" for Prony, "trapezoid" for tabulated).
    """

    kernel: MemoryKernel
    grid: Grid
    k: int
    quadrature: str = field(init=False)

    def __post_init__(self):
        if isinstance(self.kernel, PronyKernel):
            object.__setattr__(self, "quadrature", "recursive")
            for j, w in enumerate(self.kernel.weights):
                if w.shape != (self.grid.n_cells, self.k, self.k):
                    raise InvalidCoefficientError(f"Prony weight {j} has wrong shape {w.shape}")
        elif isinstance(self.kernel, TabulatedKernel):
            object.__setattr__(self, "quadrature", "trapezoid")
            if self.kernel.samples.shape[1:] != (self.grid.n_cells, self.k, self.k):
                raise InvalidCoefficientError("tabulated kernel has wrong per-cell shape")
        else:
            object.__setattr__(self, "quadrature", "none")

    @property
    def is_zero(self) -> bool:
        return isinstance(self.kernel, ZeroKernel)

    def weight_matrices(self) -> list[sp.bsr_matrix]:
        if not isinstance(self.kernel, PronyKernel):
            raise UnsupportedConfigurationError("weight matrices exist only for Prony kernels")
        return [block_diagonal(w) for w in self.kernel.weights]

    def tabulated_at(self, offsets: np.ndarray) -> np.ndarray:
        """Kernel blocks at the given nonnegative time offsets, interpolated."""
        kern = self.kernel
        if not isinstance(kern, TabulatedKernel):
            raise UnsupportedConfigurationError("tabulated evaluation needs a tabulated kernel")
        dtk = kern.times[1] - kern.times[0]
        flat = kern.samples.reshape(kern.times.size, -1)
        out = np.zeros((offsets.size, flat.shape[1]))
        for i, t in enumerate(np.asarray(offsets, dtype=float)):
            if t < 0 or t > kern.times[-1]:
                continue
            j = min(int(np.floor(t / dtk)), kern.times.size - 2)
            w = (t - kern.times[j]) / dtk
            out[i] = (1 - w) * flat[j] + w * flat[j + 1]
        return out.reshape(offsets.size, self.grid.n_cells, self.k, self.k)


def _block_apply(blocks: np.ndarray, u: np.ndarray, n_cells: int, k: int) -> np.ndarray:
    return np.einsum("cij,cj->ci", blocks, u.reshape(n_cells, k)).ravel()


def apply_memory(op: MemoryOperator, history: np.ndarray, t_index: int, dt: float) -> np.ndarray:
    """Evaluate R[u] at grid time index ``t_index`` from the state history.

    ``history`` holds states at t_0 .. t_m row-wise and must cover the
    requested index.  Prony kernels use the exact recursion on the linear
    interpolant; tabulated kernels use the trapezoid rule on grid nodes.
    """
    n = op.grid.n_cells
    if history.ndim != 2 or history.shape[1] != n * op.k:
        raise InvalidArgumentError("history must be (n_times, n_state)")
    if t_index >= history.shape[0]:
        raise InvalidArgumentError(
            f"insufficient history: need index {t_index}, have {history.shape[0] - 1}"
        )
    if op.is_zero or t_index == 0:
        return np.zeros(n * op.k)
    if isinstance(op.kernel, PronyKernel):
        aux = [np.zeros(n * op.k) for _ in op.kernel.taus]
        for m in range(t_index):
            aux = prony_advance(aux, history[m], history[m + 1], dt, op.kernel.taus)
        out = np.zeros(n * op.k)
        for w, s in zip(op.kernel.weights, aux):
            out += _block_apply(w, s, n, op.k)
        return out
    offsets = dt * np.arange(t_index, -1, -1.0)
    blocks = op.tabulated_at(offsets)
    weights = np.full(t_index + 1, dt)
    weights[0] = weights[-1] = 0.5 * dt
    out = np.zeros(n * op.k)
    for m in range(t_index + 1):
        out += weights[m] * _block_apply(blocks[m], history[m], n, op.k)
    return out


# ---------------------------------------------------------------------------
# assembled system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteSystem:
    """The assembled evolution problem A u' + P u + B u + R[u] = f."""

    mass: MassOperator
    skew: SkewOperator
    b_blocks: np.ndarray | None
    memory: MemoryOperator
    grid: Grid
    k: int

    def __post_init__(self):
        if self.mass.grid != self.grid or self.skew.grid != self.grid or self.memory.grid != self.grid:
            raise GridMismatchError("all operators must share the system grid")
        if self.mass.k != self.k or self.skew.k != self.k or self.memory.k != self.k:
            raise GridMismatchError("all operators must share the state width")

    @property
    def n_state(self) -> int:
        return self.grid.state_size(self.k)

    def b_matrix(self) -> sp.bsr_matrix | None:
        return None if self.b_blocks is None else block_diagonal(self.b_blocks)

    def apply_b(self, u: np.ndarray) -> np.ndarray:
        if self.b_blocks is None:
            return np.zeros_like(u)
        return _block_apply(self.b_blocks, u, self.grid.n_cells, self.k)


def assemble_system(
    f: CoefficientField,
    p_matrices: Sequence[np.ndarray] | None = None,
    boundary: str = PERIODIC,
) -> DiscreteSystem:
    """Assemble a DiscreteSystem from a coefficient field.

    When ``p_matrices`` is omitted and the state width matches k = dim + 1,
    the acoustic grad-div stencil is used.
    """
    if p_matrices is None:
        if f.k != f.grid.dim + 1:
            raise InvalidArgumentError(
                "no default stencil for k != dim + 1; pass symbol matrices explicitly"
            )
        p_matrices = acoustic_p_matrices(f.grid.dim)
    mass = assemble_mass(f)
    skew = assemble_skew(p_matrices, f.grid, boundary, k=f.k)
    memory = MemoryOperator(kernel=f.kernel, grid=f.grid, k=f.k)
    b = None
    if f.b is not None and np.abs(f.b).max() > 0:
        b = f.b
    return DiscreteSystem(mass=mass, skew=skew, b_blocks=b, memory=memory, grid=f.grid, k=f.k)


def max_symbol_speed(system: DiscreteSystem, n_directions: int | None = None) -> float:
    """Largest characteristic speed of the symbol over cells and directions.

    Solves the generalized eigenproblem of p(xi) against the per-cell mass
    block on sampled unit directions (all of them in 1D, a 1-degree circle
    sweep in 2D, a 2048-point Fibonacci sphere in 3D).
    """
    dim = system.grid.dim
    if dim == 1:
        dirs = np.array([[1.0]])
    elif dim == 2:
        n = 360 if n_directions is None else n_directions
        th = np.linspace(0, np.pi, n, endpoint=False)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        n = 2048 if n_directions is None else n_directions
        i = np.arange(n)
        z = 1 - 2 * (i + 0.5) / n
        r = np.sqrt(1 - z**2)
        phi = np.pi * (1 + np.sqrt(5.0)) * i
        dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)

    vals, vecs = np.linalg.eigh(system.mass.blocks)
    inv_sqrt = np.einsum("cik,ck,cjk->cij", vecs, 1.0 / np.sqrt(vals), vecs)
    speed = 0.0
    for xi in dirs:
        p = sum(x * pm for x, pm in zip(xi, system.skew.p_matrices))
        sym = np.einsum("cij,jk,ckl->cil", inv_sqrt, p, inv_sqrt)
        speed = max(speed, float(np.abs(np.linalg.eigvalsh(sym)).max()))
    return speed
