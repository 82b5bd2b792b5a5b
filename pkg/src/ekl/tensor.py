"""Block-structured dense linear algebra.

Conventions used throughout the package:

* ``vec_col`` stacks the columns of a matrix (column-major order). For a
  ``p x n`` label matrix ``Y`` the vector ``vec_col(Y)`` therefore holds the
  outputs of sample ``i`` in the slice ``[i*p:(i+1)*p]``. This is what makes
  ``vec(A B) = (B^T kron I) vec(A)`` hold, and it fixes every block layout in
  the package: operator-valued Gram matrices are ``n x n`` grids of ``p x p``
  blocks (sample-major), and ``D = Q Q^T`` is an ``m x m`` grid of ``p x p``
  blocks.
* A block matrix of total size ``(b*q) x (b*q)`` with ``block_size=q`` is a
  ``b x b`` grid of ``q x q`` blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BlockStructureError(ValueError):
    """Raised when a matrix does not split into the declared blocks."""


@dataclass(frozen=True)
class BlockMatrix:
    """Dense square matrix with a declared block size."""

    data: np.ndarray
    block_size: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise BlockStructureError(f"expected a square matrix, got shape {data.shape}")
        q = int(self.block_size)
        if q < 1 or data.shape[0] % q:
            raise BlockStructureError(
                f"dimension {data.shape[0]} is not a multiple of block_size {self.block_size}"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "block_size", q)

    @property
    def n_blocks(self) -> int:
        return self.data.shape[0] // self.block_size

    def blocks(self) -> np.ndarray:
        """View as a 4-d array ``B[l, m, i, j]`` = entry ``(i, j)`` of block ``(l, m)``."""
        b, q = self.n_blocks, self.block_size
        return self.data.reshape(b, q, b, q).transpose(0, 2, 1, 3)


def _as_block(A, block_size=None) -> BlockMatrix:
    if isinstance(A, BlockMatrix):
        if block_size is not None and block_size != A.block_size:
            return BlockMatrix(A.data, block_size)
        return A
    if block_size is None:
        raise BlockStructureError("block_size is required for plain arrays")
    return BlockMatrix(A, block_size)


def partial_trace(A, block_size: int | None = None) -> np.ndarray:
    """Blockwise trace: entry ``(l, m)`` of the result is the trace of block ``(l, m)``.

    ``A`` is a :class:`BlockMatrix` or a square array together with
    ``block_size``. Returns a ``b x b`` array.
    """
    A = _as_block(A, block_size)
    b, q = A.n_blocks, A.block_size
    return np.einsum("liki->lk", A.data.reshape(b, q, b, q))


def partial_transpose(A, block_size: int | None = None) -> BlockMatrix:
    """Transpose every ``q x q`` block in place, keeping the block grid."""
    A = _as_block(A, block_size)
    b, q = A.n_blocks, A.block_size
    out = A.data.reshape(b, q, b, q).transpose(0, 3, 2, 1).reshape(b * q, b * q)
    return BlockMatrix(np.ascontiguousarray(out), q)


def kron(A, B) -> np.ndarray:
    """Kronecker product, ``(A kron B)[i*q + k, j*s + l] = A[i, j] * B[k, l]``."""
    return np.kron(np.atleast_2d(np.asarray(A, dtype=float)), np.atleast_2d(np.asarray(B, dtype=float)))


def vec_col(M) -> np.ndarray:
    """Stack the columns of ``M`` into one vector (column-major)."""
    M = np.asarray(M, dtype=float)
    return M.reshape(-1, order="F")


def unvec_col(v, rows: int) -> np.ndarray:
    """Inverse of :func:`vec_col` for a matrix with ``rows`` rows."""
    v = np.asarray(v, dtype=float).ravel()
    if rows < 1 or v.size % rows:
        raise BlockStructureError(f"length {v.size} is not divisible by {rows}")
    return v.reshape(rows, -1, order="F")


def center(M) -> np.ndarray:
    """Return ``H M H`` with ``H = I - 11^T / n``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    # H M H without forming H: subtract row means, then column means.
    Mc = M - M.mean(axis=0, keepdims=True)
    return Mc - Mc.mean(axis=1, keepdims=True)


def is_psd(M, rtol: float = 1e-8) -> bool:
    """Symmetric psd test with an eigenvalue floor relative to the spectral norm."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return True
    if not np.allclose(M, M.T, rtol=0, atol=rtol * max(np.abs(M).max(), 1e-300) * 10):
        return False
    w = np.linalg.eigvalsh((M + M.T) / 2)
    return bool(w[0] >= -rtol * max(abs(w[-1]), abs(w[0]), np.finfo(float).tiny))
