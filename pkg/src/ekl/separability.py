"""Positive-partial-transpose (Peres-Horodecki) diagnostic for block kernel matrices.

A negative eigenvalue of the partial transpose proves that the matrix is not
a sum of Kronecker products of psd matrices (it is entangled). A psd partial
transpose does *not* prove separability; the test is only a necessary
condition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import BlockMatrix, partial_transpose


@dataclass(frozen=True)
class PPTResult:
    entangled: bool
    min_eig: float
    """Smallest eigenvalue of the partial transpose of the trace-normalised input."""

    @property
    def verdict(self) -> str:
        return "entangled" if self.entangled else "ppt_holds"

    def __str__(self):
        return f"{self.verdict} min_eig={self.min_eig:.12g}"


def ppt_check(A, block_size: int | None = None, tol: float = 1e-8) -> PPTResult:
    """Decide whether the partial transpose of ``A`` has a negative eigenvalue.

    ``A`` is normalised to unit trace first, so ``min_eig`` is reported on the
    density-matrix scale. The verdict is ``entangled`` iff
    ``min_eig < -tol * ||A||_2`` (norm of the normalised matrix).
    """
    if not isinstance(A, BlockMatrix):
        if block_size is None:
            raise ValueError("block_size is required for plain arrays")
        A = BlockMatrix(A, block_size)
    elif block_size is not None and block_size != A.block_size:
        A = BlockMatrix(A.data, block_size)
    M = A.data
    scale = max(np.abs(M).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(M - M.T).max(initial=0.0) > tol * scale:
        raise ValueError("ppt_check needs a symmetric matrix")
    w = np.linalg.eigvalsh((M + M.T) / 2)
    norm = max(abs(w[0]), abs(w[-1]))
    if w[0] < -tol * max(norm, np.finfo(float).tiny):
        raise ValueError(f"ppt_check needs a psd matrix (min eigenvalue {w[0]:.3g})")
    tr = np.trace(M)
    if tr <= 0:
        raise ValueError("ppt_check needs a matrix with positive trace")
    rho = BlockMatrix(M / tr, A.block_size)
    pt = partial_transpose(rho).data
    ev = np.linalg.eigvalsh((pt + pt.T) / 2)
    mu = float(ev[0])
    spec = np.linalg.norm(rho.data, 2)
    return PPTResult(mu < -tol * spec, mu)
