"""Cross-cutting numerical kernels.

Complex-step differentiation and the structured sparse linear solves used by
the collocation Newton iteration and the multi-experiment sensitivity system.
All model code is written against plain numpy scalars/arrays with exp/pow/sqrt
so the same code path serves real evaluation and complex-step differentiation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import SingularMatrixError

# Residual acceptance for solve_block, relative to the right-hand side.
SOLVE_RTOL = 1e-10


@dataclass(frozen=True)
class ComplexStepConfig:
    """Step size for complex-step differentiation.

    The derivative Im f(x + ih)/h has no subtractive cancellation, so h can
    sit far below sqrt(eps); 1e-30 is safe for any well-scaled model.
    """

    h: float = 1e-30

    def __post_init__(self):
        if not 0.0 < self.h < 1e-8:
            raise ValueError(f"complex step h={self.h} outside (0, 1e-8)")


def complex_step_derivative(func, x, h: float = 1e-30):
    """Derivative of a scalar-to-scalar (or vector-valued) func at real x."""
    val = func(x + 1j * h)
    return np.imag(val) / h


def complex_step_jacobian(func, x, h: float = 1e-30) -> np.ndarray:
    """Jacobian of func: R^n -> R^m by complex step, column by column.

    func must accept a complex ndarray and be holomorphic near x (no abs,
    no branching on the perturbed argument). Domain errors raised by func
    are re-raised with the offending column attached.
    """
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(func(x.astype(complex)))
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        xc = x.astype(complex)
        xc[j] += 1j * h
        try:
            fj = np.asarray(func(xc))
        except Exception as exc:
            raise type(exc)(f"{exc} (complex-step column {j})") from exc
        jac[:, j] = np.imag(fj).ravel() / h
    return jac


class BlockFactorization:
    """Immutable LU factorization wrapper; reusable across right-hand sides."""

    def __init__(self, matrix: sparse.csc_matrix, lu):
        self._matrix = matrix
        self._lu = lu

    @property
    def shape(self):
        return self._matrix.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b)
        x = self._lu.solve(b.astype(float, copy=False))
        bnorm = np.abs(b).max() if b.size else 0.0
        if bnorm > 0.0:
            resid = np.abs(self._matrix @ x - b).max()
            if not np.isfinite(resid) or resid > SOLVE_RTOL * bnorm:
                bad = int(np.argmax(np.abs(self._matrix @ x - b)))
                raise SingularMatrixError(
                    f"block solve residual {resid:.3e} exceeds "
                    f"{SOLVE_RTOL:.1e}*|b| (worst row {bad})",
                    pivot_index=bad,
                )
        return x


class BlockMatrix:
    """Sparse matrix with almost-block-diagonal or block-diagonal structure.

    Holds one block row per mesh interval plus a boundary block (collocation
    Jacobians), or one diagonal block per experiment (sensitivity systems).
    The structure is bookkeeping only; factorization delegates to a sparse LU
    with partial pivoting.
    """

    def __init__(self, matrix: sparse.spmatrix, block_size: int, n_blocks: int):
        matrix = matrix.tocsc()
        m, n = matrix.shape
        if m != n:
            raise ValueError(f"block matrix must be square, got {m}x{n}")
        if m != block_size * n_blocks:
            raise ValueError(
                f"shape {m} inconsistent with {n_blocks} blocks of size {block_size}"
            )
        self.matrix = matrix
        self.block_size = block_size
        self.n_blocks = n_blocks

    @classmethod
    def from_intervals(
        cls,
        left_blocks: np.ndarray,
        right_blocks: np.ndarray,
        bc_left: np.ndarray,
        bc_right: np.ndarray,
    ) -> "BlockMatrix":
        """Assemble a collocation system matrix.

        Row blocks: the boundary block first (columns of the first and last
        node), then one block row per interval i coupling nodes i and i+1.
        left_blocks/right_blocks have shape (n_intervals, m, m).
        """
        n_int, m, _ = left_blocks.shape
        n_nodes = n_int + 1
        rows, cols, vals = [], [], []

        blk = np.arange(m)
        rr, cc = np.meshgrid(blk, blk, indexing="ij")
        # boundary rows 0..m-1
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(np.asarray(bc_left, dtype=float).ravel())
        rows.append(rr.ravel())
        cols.append((cc + m * (n_nodes - 1)).ravel())
        vals.append(np.asarray(bc_right, dtype=float).ravel())
        # interval rows
        for i in range(n_int):
            r0 = m * (1 + i)
            rows.append((rr + r0).ravel())
            cols.append((cc + m * i).ravel())
            vals.append(left_blocks[i].ravel())
            rows.append((rr + r0).ravel())
            cols.append((cc + m * (i + 1)).ravel())
            vals.append(right_blocks[i].ravel())

        mat = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m * n_nodes, m * n_nodes),
        )
        return cls(mat, block_size=m, n_blocks=n_nodes)

    @classmethod
    def block_diag(cls, matrices) -> "BlockMatrix":
        """Block-diagonal composition (one block per experiment)."""
        mats = [m.matrix if isinstance(m, BlockMatrix) else m for m in matrices]
        full = sparse.block_diag(mats, format="csc")
        return cls(full, block_size=full.shape[0], n_blocks=1)

    def factorize(self) -> BlockFactorization:
        try:
            lu = splu(self.matrix)
        except RuntimeError as exc:
            raise SingularMatrixError(
                f"LU factorization failed: {exc} "
                f"(suspect row {_suspect_pivot(self.matrix)})",
                pivot_index=_suspect_pivot(self.matrix),
            ) from exc
        du = np.abs(lu.U.diagonal())
        scale = du.max() if du.size else 0.0
        tiny = du <= np.finfo(float).eps * max(scale, 1.0)
        if tiny.any():
            idx = int(np.argmax(tiny))
            raise SingularMatrixError(
                f"singular to working precision at pivot {idx}", pivot_index=idx
            )
        return BlockFactorization(self.matrix, lu)


def _suspect_pivot(matrix: sparse.spmatrix) -> int:
    """Best-effort location of the structural defect of a singular matrix."""
    row_max = np.abs(matrix).max(axis=1).toarray().ravel()
    return int(np.argmin(row_max))


def solve_block(a, b) -> np.ndarray:
    """Solve A X = B for a BlockMatrix (or any square sparse matrix).

    Post-condition ||A X - B||_inf <= 1e-10 ||B||_inf, enforced; violation or
    a singular factorization raises SingularMatrixError with the pivot index.
    """
    if not isinstance(a, BlockMatrix):
        a = sparse.csc_matrix(a)
        a = BlockMatrix(a, block_size=a.shape[0], n_blocks=1)
    return a.factorize().solve(np.asarray(b))
