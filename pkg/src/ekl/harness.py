"""Experiments: synthetic data, metrics, cross-validation and method comparison.

Randomness comes from numpy's PCG64 generator (``np.random.default_rng``),
whose streams are identical across platforms for a given seed.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .alignment import EklObjectiveConfig, learn_entangled_kernel
from .features import FeatureMap, ScalarKernelSpec, apply_feature_map, fit_feature_map, gram_scalar
from .ovk import EntangledModel
from .solver import (FitResult, fit_krr_baseline, fit_operator_valued, fit_scalar,
                     fit_separable_baseline, predict_features, predict_gram)

log = logging.getLogger(__name__)

METHODS = ("ekl", "ptrekl", "krr", "separable")
DEFAULT_LAMBDAS = tuple(10.0**k for k in range(-4, 3))
DEFAULT_GAMMAS = tuple(round(0.1 * k, 1) for k in range(11))
RESULT_COLUMNS = ("method", "seed", "fold", "n", "p", "m", "r", "lambda", "gamma",
                  "nmse", "ni", "fit_seconds", "predict_seconds")


@dataclass
class Dataset:
    """Inputs ``X`` (``n x d``, one sample per row) and outputs ``Y`` (``p x n``)."""

    X: np.ndarray
    Y: np.ndarray
    X_test: np.ndarray | None = None
    Y_test: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        _check_pair(self.X, self.Y)
        if (self.X_test is None) != (self.Y_test is None):
            raise ValueError("X_test and Y_test must be given together")
        if self.X_test is not None:
            self.X_test = np.atleast_2d(np.asarray(self.X_test, dtype=float))
            self.Y_test = np.atleast_2d(np.asarray(self.Y_test, dtype=float))
            _check_pair(self.X_test, self.Y_test)
            if self.X_test.shape[1] != self.X.shape[1] or self.Y_test.shape[0] != self.Y.shape[0]:
                raise ValueError("test split does not match the training dimensions")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.Y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[:, idx])

    def split(self, n_train: int, seed) -> "Dataset":
        """Random train/test partition of the training samples."""
        if not 0 < n_train < self.n:
            raise ValueError(f"n_train must lie in (0, {self.n}), got {n_train}")
        perm = np.random.default_rng(seed).permutation(self.n)
        tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        return Dataset(self.X[tr], self.Y[:, tr], self.X[te], self.Y[:, te])


def _check_pair(X, Y):
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("X must be n x d and Y must be p x n")
    if Y.shape[1] != X.shape[0]:
        raise ValueError(f"Y has {Y.shape[1]} columns but X has {X.shape[0]} rows")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise ValueError("dataset contains non-finite values")


def gen_bilinear(n: int, p: int, d: int, noise_sigma: float = 0.1, seed=0, n_test: int = 0) -> Dataset:
    """Labels from the bilinear model ``Y = T C A + C K + noise``.

    ``T`` (p x p), ``C`` (p x N), ``A`` (N x N) and ``X`` (N x d) are standard
    normal with ``N = n + n_test``; ``K = X X^T`` is the linear Gram. The first
    ``n`` samples form the training set, the rest the test split.
    """
    if min(n, p, d) < 1 or n_test < 0:
        raise ValueError("n, p, d must be positive and n_test non-negative")
    rng = np.random.default_rng(seed)
    N = n + n_test
    T = rng.standard_normal((p, p))
    C = rng.standard_normal((p, N))
    A = rng.standard_normal((N, N))
    X = rng.standard_normal((N, d))
    noise = rng.standard_normal((p, N))
    K = X @ X.T
    Y = T @ C @ A + C @ K + noise_sigma * noise
    if n_test:
        return Dataset(X[:n], Y[:, :n], X[n:], Y[:, n:])
    return Dataset(X, Y)


# Metrics ---------------------------------------------------------------------------


def nmse(Y_pred, Y_true) -> float:
    """Mean over outputs of MSE divided by the output's variance in ``Y_true``."""
    Y_pred = np.atleast_2d(np.asarray(Y_pred, dtype=float))
    Y_true = np.atleast_2d(np.asarray(Y_true, dtype=float))
    if Y_pred.shape != Y_true.shape:
        raise ValueError(f"shape mismatch: {Y_pred.shape} vs {Y_true.shape}")
    var = Y_true.var(axis=1)
    if np.any(var <= 0):
        raise ValueError("an output channel has zero variance; nMSE is undefined")
    mse = ((Y_pred - Y_true) ** 2).mean(axis=1)
    return float(np.mean(mse / var))


def ni(err_method: float, err_krr: float) -> float:
    """Relative improvement over kernel ridge regression, ``(err_krr - err) / err_krr``."""
    if not err_krr > 0:
        raise ValueError("the KRR error must be positive")
    return (err_krr - err_method) / err_krr


# Method fitting --------------------------------------------------------------------


@dataclass(frozen=True)
class CvPlan:
    lambda_grid: tuple = DEFAULT_LAMBDAS
    gamma_grid: tuple = DEFAULT_GAMMAS
    folds: int = 5
    seed: int = 0
    rank_fraction: float = 1.0

    def __post_init__(self):
        if not self.lambda_grid or not self.gamma_grid:
            raise ValueError("grids must be non-empty")
        if self.folds < 2:
            raise ValueError("at least two folds are required")
        if not 0 < self.rank_fraction <= 1:
            raise ValueError("rank_fraction must lie in (0, 1]")
        if any(not lam > 0 for lam in self.lambda_grid):
            raise ValueError("lambda values must be positive")
        if any(not 0 <= g <= 1 for g in self.gamma_grid):
            raise ValueError("gamma values must lie in [0, 1]")


@dataclass(frozen=True)
class KernelSettings:
    """Scalar kernel, its feature approximation and optimiser settings for EKL."""

    kernel: ScalarKernelSpec = ScalarKernelSpec("linear")
    approx: str = "exact-linear"
    m: int | None = None
    max_iters: int = 500
    grad_tol: float = 1e-6
    seed: int = 0

    def feature_map(self, X) -> FeatureMap:
        m = self.m
        if self.approx == "nystrom" and m is not None:
            m = min(m, X.shape[0])
        return fit_feature_map(self.kernel, self.approx, m, X, self.seed)


def kraus_rank(rank_fraction: float, m: int, p: int) -> int:
    return max(1, min(m * p, math.ceil(rank_fraction * m * p - 1e-9)))


def separable_output_matrix(Y) -> np.ndarray:
    """Output matrix for the separable baseline: label covariance scaled to trace ``p``."""
    Yc = Y - Y.mean(axis=1, keepdims=True)
    T = Yc @ Yc.T
    tr = np.trace(T)
    return np.eye(Y.shape[0]) if tr <= 0 else T * (Y.shape[0] / tr)


class KernelCache:
    """Learned ``Q`` matrices keyed by training subset and ``gamma``."""

    def __init__(self):
        self._store = {}

    def get(self, X, Y, gamma, settings: KernelSettings, rank_fraction: float):
        key = (X.tobytes(), Y.tobytes(), float(gamma), settings, float(rank_fraction))
        hit = self._store.get(key)
        if hit is None:
            hit = learn_model(X, Y, gamma, settings, rank_fraction)
            self._store[key] = hit
        return hit


def learn_model(X, Y, gamma, settings: KernelSettings, rank_fraction: float) -> tuple[EntangledModel, np.ndarray]:
    """Stage one: fit features and learn ``Q``. Returns the model and training features."""
    fm = settings.feature_map(X)
    Phi = apply_feature_map(fm, X)
    r = kraus_rank(rank_fraction, fm.m, Y.shape[0])
    cfg = EklObjectiveConfig(gamma=gamma, max_iters=settings.max_iters,
                             grad_tol=settings.grad_tol, seed=settings.seed)
    Q = learn_entangled_kernel(Phi, Y, cfg, r)
    return EntangledModel(Q, Y.shape[0], fm, gamma=gamma), Phi


class _Fitted:
    """A fitted method bound to its training data, able to predict raw inputs."""

    def __init__(self, fit: FitResult, X_train, kernel):
        self.fit, self.X_train, self.kernel = fit, X_train, kernel

    def predict(self, X):
        if self.fit.mode in ("ovk", "scalar"):
            return predict_features(self.fit, apply_feature_map(self.fit.model.feature_map, X))
        return predict_gram(self.fit, gram_scalar(self.kernel, self.X_train, X))


def fit_method(method: str, X, Y, lam: float, gamma: float, settings: KernelSettings,
               rank_fraction: float = 1.0, cache: KernelCache | None = None) -> _Fitted:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method in ("ekl", "ptrekl"):
        if cache is None:
            em, Phi = learn_model(X, Y, gamma, settings, rank_fraction)
        else:
            em, Phi = cache.get(X, Y, gamma, settings, rank_fraction)
        em = em.with_params(lam=lam)
        fit = fit_operator_valued(em, Phi, Y, lam) if method == "ekl" else fit_scalar(em, Phi, Y, lam)
        return _Fitted(fit, X, settings.kernel)
    K = gram_scalar(settings.kernel, X, X)
    if method == "krr":
        fit = fit_krr_baseline(K, Y, lam, X, settings.kernel)
    else:
        fit = fit_separable_baseline(K, separable_output_matrix(Y), Y, lam, X, settings.kernel)
    return _Fitted(fit, X, settings.kernel)


# Cross-validation ------------------------------------------------------------------


def fold_indices(n: int, folds: int, seed) -> list[np.ndarray]:
    """Random partition of ``range(n)`` into ``folds`` nearly equal validation sets."""
    if n // folds < 2:
        raise ValueError(f"{n} samples cannot fill {folds} folds with at least 2 samples each")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


@dataclass
class CvResult:
    best_lambda: float
    best_gamma: float
    scores: dict = field(default_factory=dict)
    """Mean validation nMSE per ``(lambda, gamma)`` cell."""
    fold_scores: dict = field(default_factory=dict)


def _select(scores: dict) -> tuple[float, float]:
    # Lowest score; ties go to larger lambda, then smaller gamma.
    return min(scores, key=lambda lg: (scores[lg], -lg[0], lg[1]))


def cross_validate(ds: Dataset, plan: CvPlan, method: str, settings: KernelSettings | None = None,
                   cache: KernelCache | None = None) -> CvResult:
    """k-fold selection of ``(lambda, gamma)`` by mean validation nMSE.

    ``gamma`` is only searched for the EKL methods; baselines report ``gamma = 0``.
    """
    settings = settings or KernelSettings()
    lambdas = sorted(set(float(v) for v in plan.lambda_grid))
    gammas = sorted(set(float(v) for v in plan.gamma_grid)) if method in ("ekl", "ptrekl") else [0.0]
    parts = fold_indices(ds.n, plan.folds, plan.seed)
    per_fold = {(lam, g): [] for lam in lambdas for g in gammas}
    for k, val in enumerate(parts):
        tr = np.setdiff1d(np.arange(ds.n), val)
        Xtr, Ytr = ds.X[tr], ds.Y[:, tr]
        Xva, Yva = ds.X[val], ds.Y[:, val]
        for g in gammas:
            for lam in lambdas:
                fitted = fit_method(method, Xtr, Ytr, lam, g, settings, plan.rank_fraction, cache)
                per_fold[(lam, g)].append(nmse(fitted.predict(Xva), Yva))
    scores = {cell: float(np.mean(v)) for cell, v in per_fold.items()}
    best_lambda, best_gamma = _select(scores)
    return CvResult(best_lambda, best_gamma, scores, per_fold)


# Experiments -----------------------------------------------------------------------


def run_experiment(ds: Dataset, methods=METHODS, plan: CvPlan | None = None,
                   settings: KernelSettings | None = None, seed: int = 0,
                   cache: KernelCache | None = None) -> list[dict]:
    """Cross-validate each method on the training split and score it on the test split.

    Returns one result row per method (see ``RESULT_COLUMNS``); ``ni`` is filled
    when ``krr`` is among the methods.
    """
    if ds.X_test is None:
        raise ValueError("run_experiment needs a dataset with a test split")
    plan = plan or CvPlan()
    settings = settings or KernelSettings()
    cache = cache if cache is not None else KernelCache()
    rows = []
    for method in methods:
        cv = cross_validate(ds, plan, method, settings, cache)
        t0 = time.perf_counter()
        fitted = fit_method(method, ds.X, ds.Y, cv.best_lambda, cv.best_gamma, settings,
                            plan.rank_fraction, cache)
        t1 = time.perf_counter()
        pred = fitted.predict(ds.X_test)
        t2 = time.perf_counter()
        m = r = ""
        if fitted.fit.model is not None:
            m, r = fitted.fit.model.m, fitted.fit.model.r
        rows.append({"method": method, "seed": seed, "fold": "test", "n": ds.n, "p": ds.p, "m": m, "r": r,
                     "lambda": cv.best_lambda, "gamma": cv.best_gamma,
                     "nmse": nmse(pred, ds.Y_test), "ni": "",
                     "fit_seconds": t1 - t0, "predict_seconds": t2 - t1})
    krr = [row["nmse"] for row in rows if row["method"] == "krr"]
    if krr:
        for row in rows:
            row["ni"] = ni(row["nmse"], krr[0])
    return rows


def synthetic_study(n: int, p: int, d: int, seeds, n_test: int = 100, noise_sigma: float = 0.1,
                    methods=METHODS, plan: CvPlan | None = None,
                    settings: KernelSettings | None = None) -> list[dict]:
    """Repeat :func:`run_experiment` on bilinear data for each seed."""
    rows = []
    for seed in seeds:
        ds = gen_bilinear(n, p, d, noise_sigma, seed=seed, n_test=n_test)
        log.info("synthetic seed %s", seed)
        rows.extend(run_experiment(ds, methods, plan, settings, seed))
    return rows


def split_study(ds: Dataset, n_train: int, splits, methods=METHODS, plan: CvPlan | None = None,
                settings: KernelSettings | None = None) -> list[dict]:
    """Repeat :func:`run_experiment` over random train/test partitions of ``ds``."""
    rows = []
    for seed in splits:
        rows.extend(run_experiment(ds.split(n_train, seed), methods, plan, settings, seed))
    return rows


def median_nmse(rows, method: str) -> float:
    return float(np.median([row["nmse"] for row in rows if row["method"] == method]))
