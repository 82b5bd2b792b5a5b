"""Operator-valued kernel families and their Gram matrices.

An entangled model is parameterised by ``Q`` (``mp x r``). Column ``i`` of
``Q`` is ``vec_col(M_i)`` for a Kraus operator ``M_i`` of shape ``p x m``, and
``D = Q Q^T`` is an ``m x m`` grid of ``p x p`` blocks. The training Gram is

    G = (Phi^T kron I_p) D (Phi kron I_p) = Z Z^T,   Z = (Phi^T kron I_p) Q,

an ``n x n`` grid of ``p x p`` blocks, matching ``vec_col`` of a ``p x n``
label matrix. Nothing in the hot path materialises ``D`` or a Kronecker
product: every product goes through the ``(m, p, r)`` view of ``Q``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .features import FeatureMap, ScalarKernelSpec, apply_feature_map, gram_scalar
from .tensor import is_psd, partial_trace


class ShapeError(ValueError):
    pass


def q_tensor(Q: np.ndarray, p: int) -> np.ndarray:
    """View ``Q`` as ``Q3[k, s, i] = M_i[s, k]`` (feature, output, Kraus index)."""
    mp, r = Q.shape
    if mp % p:
        raise ShapeError(f"Q has {mp} rows, not a multiple of p = {p}")
    return Q.reshape(mp // p, p, r)


@dataclass(frozen=True)
class EntangledModel:
    Q: np.ndarray
    p: int
    feature_map: FeatureMap | None = None
    gamma: float = 0.5
    lam: float = 1.0

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim != 2:
            raise ShapeError("Q must be a 2-d array")
        q_tensor(Q, self.p)
        if not 1 <= Q.shape[1] <= Q.shape[0]:
            raise ShapeError(f"Kraus rank r = {Q.shape[1]} must satisfy 1 <= r <= mp = {Q.shape[0]}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.feature_map is not None and self.feature_map.m != Q.shape[0] // self.p:
            raise ShapeError("feature map dimension does not match Q")
        object.__setattr__(self, "Q", Q)

    @property
    def m(self) -> int:
        return self.Q.shape[0] // self.p

    @property
    def r(self) -> int:
        return self.Q.shape[1]

    @classmethod
    def normalized(cls, Q, p, **kw) -> "EntangledModel":
        """Build a model with ``Q`` projected onto the unit Frobenius sphere."""
        Q = np.asarray(Q, dtype=float)
        nrm = np.linalg.norm(Q)
        if nrm == 0:
            raise ValueError("Q must be nonzero")
        return cls(Q / nrm, p, **kw)

    def with_params(self, **kw) -> "EntangledModel":
        return replace(self, **kw)

    def features(self, X) -> np.ndarray:
        if self.feature_map is None:
            raise ValueError("model has no feature map")
        return apply_feature_map(self.feature_map, X)

    def dense_D(self) -> np.ndarray:
        """``D = Q Q^T`` as a dense ``mp x mp`` matrix. Debug/oracle use only."""
        return self.Q @ self.Q.T


def _check_phi(em: EntangledModel, Phi) -> np.ndarray:
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2 or Phi.shape[0] != em.m:
        raise ShapeError(f"feature matrix must have {em.m} rows, got shape {Phi.shape}")
    return Phi


def low_rank_factor(em: EntangledModel, Phi) -> np.ndarray:
    """``Z = (Phi^T kron I_p) Q`` of shape ``tp x r``; rows ``[j*p:(j+1)*p]`` belong to sample ``j``."""
    Phi = _check_phi(em, Phi)
    Z3 = np.einsum("kj,ksi->jsi", Phi, q_tensor(em.Q, em.p), optimize=True)
    return Z3.reshape(-1, em.r)


def assemble_gram_entangled(em: EntangledModel, Phi) -> np.ndarray:
    """Dense ``np x np`` Gram ``Z Z^T`` (sample-major ``p x p`` blocks)."""
    Z = low_rank_factor(em, Phi)
    return Z @ Z.T


def cross_gram_entangled(em: EntangledModel, Phi_a, Phi_b) -> np.ndarray:
    """Dense ``sp x np`` Gram between two sample sets."""
    return low_rank_factor(em, Phi_a) @ low_rank_factor(em, Phi_b).T


def ptr_D(em: EntangledModel) -> np.ndarray:
    """``tr_p(D)``, the ``m x m`` blockwise trace of ``D``, computed from ``Q``."""
    Q3 = q_tensor(em.Q, em.p)
    return np.einsum("ksi,lsi->kl", Q3, Q3, optimize=True)


def extract_scalar_kernel(em: EntangledModel, Phi_a, Phi_b) -> np.ndarray:
    """Scalar kernel ``Phi_a^T tr_p(D) Phi_b`` of shape ``s x n``.

    On identical inputs this equals the blockwise trace of the entangled Gram.
    """
    Phi_a = _check_phi(em, Phi_a)
    Phi_b = _check_phi(em, Phi_b)
    return Phi_a.T @ (ptr_D(em) @ Phi_b)


# Separable and Choi-Kraus kernels -------------------------------------------------


def _check_output_matrix(T) -> np.ndarray:
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape[0] != T.shape[1] or not is_psd(T):
        raise ValueError("output matrix T must be symmetric positive semi-definite")
    return T


@dataclass(frozen=True)
class SeparableKernel:
    """``K(x, z) = k(x, z) T``; ``scalar`` is an exact kernel spec or a fitted feature map."""

    scalar: ScalarKernelSpec | FeatureMap
    T: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "T", _check_output_matrix(self.T))

    @property
    def p(self) -> int:
        return self.T.shape[0]

    def scalar_gram(self, X, Z) -> np.ndarray:
        if isinstance(self.scalar, FeatureMap):
            return apply_feature_map(self.scalar, Z).T @ apply_feature_map(self.scalar, X)
        return gram_scalar(self.scalar, X, Z)


def separable_gram(sk: SeparableKernel, X, Z) -> np.ndarray:
    """``K(Z, X) kron T``: block ``(i, j)`` is ``k(z_i, x_j) T``; shape ``tp x np``."""
    return np.kron(sk.scalar_gram(X, Z), sk.T)


@dataclass(frozen=True)
class ChoiKrausKernel:
    """``K(x, z) = sum_i M_i phi(x) phi(z)^T M_i^T`` with ``kraus_ops`` of shape ``r x p x m``."""

    kraus_ops: np.ndarray
    feature_map: FeatureMap

    def __post_init__(self):
        ops = np.asarray(self.kraus_ops, dtype=float)
        if ops.ndim == 2:
            ops = ops[None]
        if ops.ndim != 3 or ops.shape[0] < 1:
            raise ShapeError("kraus_ops must be a non-empty stack of p x m matrices")
        if ops.shape[2] != self.feature_map.m:
            raise ShapeError(f"Kraus operators have {ops.shape[2]} columns, feature map has m = {self.feature_map.m}")
        object.__setattr__(self, "kraus_ops", ops)

    @property
    def r(self) -> int:
        return self.kraus_ops.shape[0]

    @property
    def p(self) -> int:
        return self.kraus_ops.shape[1]

    def to_entangled(self, **kw) -> EntangledModel:
        """Same kernel as an :class:`EntangledModel` (unnormalised ``Q``)."""
        r, p, m = self.kraus_ops.shape
        Q = self.kraus_ops.transpose(2, 1, 0).reshape(m * p, r)
        return EntangledModel(Q, p, self.feature_map, **kw)


def choi_kraus_eval(ck: ChoiKrausKernel, x, z) -> np.ndarray:
    """The ``p x p`` kernel value ``sum_i M_i phi(x) phi(z)^T M_i^T``."""
    fx = apply_feature_map(ck.feature_map, np.reshape(x, (1, -1)))[:, 0]
    fz = apply_feature_map(ck.feature_map, np.reshape(z, (1, -1)))[:, 0]
    a = ck.kraus_ops @ fx
    b = ck.kraus_ops @ fz
    return a.T @ b


def separable_to_choi_kraus(T, feature_map: FeatureMap, clip: float = 1e-12) -> ChoiKrausKernel:
    """Kraus operators ``t_j e_k^T`` of the separable kernel ``k(x, z) T``.

    ``T = sum_j t_j t_j^T`` comes from an eigendecomposition with eigenvalues
    clipped at ``clip``; directions below the clip are dropped.
    """
    T = _check_output_matrix(T)
    w, V = np.linalg.eigh(T)
    keep = w > clip
    if not keep.any():
        keep = w >= w.max()
    vecs = V[:, keep] * np.sqrt(np.clip(w[keep], 0.0, None))
    m = feature_map.m
    eye = np.eye(m)
    ops = np.einsum("sj,kl->jksl", vecs, eye).reshape(-1, T.shape[0], m)
    return ChoiKrausKernel(ops, feature_map)
