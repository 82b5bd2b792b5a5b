"""Closed-form ridge solutions for entangled, partial-trace and baseline kernels.

Label matrices are ``p x n`` and coefficient vectors follow ``vec_col``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .features import ScalarKernelSpec, gram_scalar
from .ovk import EntangledModel, ptr_D, q_tensor
from .tensor import unvec_col, vec_col

MODES = ("ovk", "scalar", "krr-baseline", "separable-baseline")
DENSE_ORACLE_LIMIT = 2000


@dataclass(frozen=True)
class FitResult:
    """Solved coefficients plus whatever prediction needs.

    ``coefficients`` is the ``np`` vector ``c`` for ``ovk`` mode and an
    ``n x p`` matrix for the scalar-kernel modes. ``train`` holds the training
    feature matrix (``ovk``/``scalar``) or training inputs (baselines).
    """

    mode: str
    coefficients: np.ndarray
    lam: float
    model: EntangledModel | None = None
    train: np.ndarray | None = None
    kernel: ScalarKernelSpec | None = None
    T: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @property
    def p(self) -> int:
        if self.mode == "ovk":
            return self.model.p
        return self.coefficients.shape[1]


def _check_lambda(lam):
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return float(lam)


def _check_labels(Phi, Y):
    Phi = np.asarray(Phi, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Phi.shape[1] != Y.shape[1]:
        raise ValueError(f"features cover {Phi.shape[1]} samples but labels cover {Y.shape[1]}")
    return Phi, Y


# Entangled kernel products -------------------------------------------------------


def apply_factor(em: EntangledModel, Phi, u) -> np.ndarray:
    """``Z u = vec_col(unvec(Q u) Phi)`` for ``u`` of shape ``(r,)`` or ``(r, k)``."""
    Qu = em.Q @ u
    if Qu.ndim == 1:
        return vec_col(unvec_col(Qu, em.p) @ Phi)
    k = Qu.shape[1]
    W = Qu.reshape(em.m, em.p, k)
    return np.einsum("ksc,kj->jsc", W, Phi, optimize=True).reshape(-1, k)


def apply_factor_t(em: EntangledModel, Phi, v) -> np.ndarray:
    """``Z^T v = Q^T vec_col(unvec(v) Phi^T)`` for a vector ``v`` of length ``np``."""
    V = unvec_col(v, em.p)
    return em.Q.T @ vec_col(V @ Phi.T)


def factor_gram(em: EntangledModel, Phi) -> np.ndarray:
    """``Z^T Z = Q^T (Phi Phi^T kron I_p) Q`` (``r x r``) without forming ``Z``."""
    Q3 = q_tensor(em.Q, em.p)
    PQ = np.einsum("kl,lsi->ksi", Phi @ Phi.T, Q3, optimize=True)
    return em.Q.T @ PQ.reshape(em.Q.shape)


def fit_operator_valued(em: EntangledModel, Phi, Y, lam: float) -> FitResult:
    """Solve ``(G + lam I) c = vec_col(Y)`` by the Woodbury identity on ``Z``.

    ``(Z Z^T + lam I)^{-1} v = (v - Z (Z^T Z + lam I_r)^{-1} Z^T v) / lam``;
    only the ``r x r`` SPD system is factorised.
    """
    lam = _check_lambda(lam)
    Phi, Y = _check_labels(Phi, Y)
    if Y.shape[0] != em.p or Phi.shape[0] != em.m:
        raise ValueError("feature/label shapes do not match the model")
    v = vec_col(Y)
    S = factor_gram(em, Phi)
    S[np.diag_indices_from(S)] += lam
    u = cho_solve(cho_factor(S, lower=True), apply_factor_t(em, Phi, v))
    c = (v - apply_factor(em, Phi, u)) / lam
    return FitResult("ovk", c, lam, model=em, train=Phi)


def _psd_sqrt(B):
    w, V = eigh((B + B.T) / 2)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def fit_scalar(em: EntangledModel, Phi, Y, lam: float) -> FitResult:
    """Ridge with the extracted kernel ``Phi^T tr_p(D) Phi``; solves an ``m x m`` system.

    With ``W = B^{1/2} Phi``: ``C = (Y^T - W^T (W W^T + lam I_m)^{-1} W Y^T) / lam``.
    """
    lam = _check_lambda(lam)
    Phi, Y = _check_labels(Phi, Y)
    B = ptr_D(em)
    W = _psd_sqrt(B) @ Phi
    S = W @ W.T
    S[np.diag_indices_from(S)] += lam
    Yt = Y.T
    C = (Yt - W.T @ cho_solve(cho_factor(S, lower=True), W @ Yt)) / lam
    return FitResult("scalar", C, lam, model=em, train=Phi, extras={"B": B})


def fit_krr_baseline(K, Y, lam: float, X_train=None, kernel: ScalarKernelSpec | None = None) -> FitResult:
    """Independent kernel ridge per output: ``(K + lam I) C = Y^T``."""
    lam = _check_lambda(lam)
    K = np.asarray(K, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    S = K + lam * np.eye(K.shape[0])
    C = cho_solve(cho_factor(S, lower=True), Y.T)
    return FitResult("krr-baseline", C, lam, train=None if X_train is None else np.asarray(X_train, float),
                     kernel=kernel)


def fit_separable_baseline(K, T, Y, lam: float, X_train=None, kernel: ScalarKernelSpec | None = None) -> FitResult:
    """Solve ``(K kron T + lam I) c = vec_col(Y)`` in the joint eigenbasis of ``K`` and ``T``.

    In matrix form ``T C K + lam C = Y``; rotating by the eigenvectors of both
    sides decouples it entrywise.
    """
    lam = _check_lambda(lam)
    K = np.asarray(K, dtype=float)
    T = np.atleast_2d(np.asarray(T, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    lk, U = eigh((K + K.T) / 2)
    lt, V = eigh((T + T.T) / 2)
    Yr = V.T @ Y @ U
    Cr = Yr / (np.outer(lt, lk) + lam)
    C = V @ Cr @ U.T
    return FitResult("separable-baseline", C.T, lam, train=None if X_train is None else np.asarray(X_train, float),
                     kernel=kernel, T=T)


# Prediction ----------------------------------------------------------------------


def predict_features(fit: FitResult, Phi_t) -> np.ndarray:
    """Predictions ``p x t`` from test features (``ovk`` and ``scalar`` modes)."""
    Phi_t = np.asarray(Phi_t, dtype=float)
    em = fit.model
    if Phi_t.ndim != 2 or Phi_t.shape[0] != em.m:
        raise ValueError(f"test features must have {em.m} rows, got shape {Phi_t.shape}")
    if Phi_t.shape[1] == 0:
        return np.zeros((fit.p, 0))
    if fit.mode == "ovk":
        u = apply_factor_t(em, fit.train, fit.coefficients)
        return unvec_col(apply_factor(em, Phi_t, u), em.p)
    B = fit.extras.get("B")
    if B is None:
        B = ptr_D(em)
    # (Phi_t^T B Phi C)^T, multiplied right to left.
    return (Phi_t.T @ (B @ (fit.train @ fit.coefficients))).T


def predict(fit: FitResult, X_test) -> np.ndarray:
    """Predictions ``p x t`` for raw inputs ``X_test`` (``t x d``)."""
    X_test = np.asarray(X_test, dtype=float)
    if fit.mode in ("ovk", "scalar"):
        if X_test.ndim == 2 and X_test.shape[0] == 0:
            return np.zeros((fit.p, 0))
        return predict_features(fit, fit.model.features(X_test))
    if fit.train is None or fit.kernel is None:
        raise ValueError("baseline fit was made without training inputs; use predict_gram")
    if X_test.ndim != 2 or X_test.shape[1] != fit.train.shape[1]:
        raise ValueError(f"test inputs must have {fit.train.shape[1]} columns")
    return predict_gram(fit, gram_scalar(fit.kernel, fit.train, X_test))


def predict_gram(fit: FitResult, K_t) -> np.ndarray:
    """Baseline predictions from a test-by-train scalar Gram ``K_t`` (``t x n``)."""
    K_t = np.asarray(K_t, dtype=float)
    if fit.mode == "krr-baseline":
        return (K_t @ fit.coefficients).T
    if fit.mode == "separable-baseline":
        return fit.T @ (K_t @ fit.coefficients).T
    raise ValueError(f"predict_gram does not apply to mode {fit.mode!r}")


def reduce_dimensions(em: EntangledModel, Phi) -> np.ndarray:
    """Reduced coordinates ``Z = (Phi^T kron I_p) Q`` (``tp x r``).

    ``Z.reshape(t, p, r)[:, s, :]`` is the ``t x r`` embedding for output ``s``.
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2 or Phi.shape[0] != em.m:
        raise ValueError(f"features must have {em.m} rows, got shape {Phi.shape}")
    Z3 = np.einsum("kj,ksi->jsi", Phi, q_tensor(em.Q, em.p), optimize=True)
    return Z3.reshape(-1, em.r)


# Dense oracles (tests and benchmarks only) -----------------------------------------


def _guard(size):
    if size > DENSE_ORACLE_LIMIT:
        raise ValueError(f"dense oracle refused for size {size} > {DENSE_ORACLE_LIMIT}")


def dense_solve_ovk(G, Y, lam) -> np.ndarray:
    """Reference ``(G + lam I)^{-1} vec_col(Y)`` with a dense factorisation."""
    G = np.asarray(G, dtype=float)
    _guard(G.shape[0])
    return np.linalg.solve(G + lam * np.eye(G.shape[0]), vec_col(Y))


def dense_solve_scalar(K, Y, lam) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    _guard(K.shape[0])
    return np.linalg.solve(K + lam * np.eye(K.shape[0]), np.asarray(Y, dtype=float).T)


# Bounds ----------------------------------------------------------------------------


def _positive(**kw):
    for name, value in kw.items():
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"{name} must be positive and finite, got {value}")


def rademacher_bound(beta: float, kappa: float, p: int, n: int) -> float:
    """Upper bound ``beta * sqrt(kappa p / n)`` on the empirical Rademacher complexity."""
    _positive(beta=beta, kappa=kappa, p=p, n=n)
    return beta * math.sqrt(kappa * p / n)


def generalization_bound(emp_risk: float, beta: float, kappa: float, p: int, n: int,
                         M: float, delta: float) -> float:
    """Risk bound holding with probability at least ``1 - delta``.

    ``emp_risk + 4 sqrt(2) M sqrt(beta^2 kappa p / n) + 3 M sqrt(log(2/delta) / (2n))``.
    ``M = 0`` is accepted and returns ``emp_risk``.
    """
    _positive(beta=beta, kappa=kappa, p=p, n=n)
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if M < 0 or emp_risk < 0:
        raise ValueError("M and the empirical risk must be non-negative")
    if M == 0:
        return emp_risk
    return (emp_risk + 4.0 * math.sqrt(2.0) * M * math.sqrt(beta**2 * kappa * p / n)
            + 3.0 * M * math.sqrt(math.log(2.0 / delta) / (2.0 * n)))


def estimate_kappa(spec: ScalarKernelSpec, X) -> tuple[float, bool]:
    """Bound on ``k(x, x)``; returns ``(kappa, data_dependent)``.

    The gaussian kernel is bounded by 1. For the linear kernel the bound is
    the largest squared norm in ``X`` and only holds on that data.
    """
    if spec.kind == "gaussian":
        return 1.0, False
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return float(np.max(np.einsum("ij,ij->i", X, X))), True
