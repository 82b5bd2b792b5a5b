"""Wall-clock comparison of ridge solvers across kernel structure classes.

``fit`` times computing the coefficients of the predictor from an already
built kernel (Gram, feature matrix or ``Q``); ``predict`` times producing
predictions for ``n`` new points. Kernel learning itself is not timed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from statistics import median

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .ovk import EntangledModel, assemble_gram_entangled, cross_gram_entangled
from .solver import fit_operator_valued, fit_scalar, fit_separable_baseline, predict_features
from .tensor import unvec_col, vec_col

STRUCTURE_CLASSES = ("no-structure", "separable", "low-rank-separable", "entangled", "entangled-ptr")
TIMING_COLUMNS = ("class", "n", "p", "m", "r", "repeats", "seed", "fit_seconds", "predict_seconds")


@dataclass(frozen=True)
class BenchSize:
    n: int
    p: int
    m_frac: float
    r_frac: float

    @property
    def m(self) -> int:
        return max(1, round(self.m_frac * self.n))

    @property
    def r(self) -> int:
        mp = self.m * self.p
        return max(1, min(mp, math.ceil(self.r_frac * mp - 1e-9)))

    @classmethod
    def parse_grid(cls, text: str) -> list["BenchSize"]:
        """Parse ``"n:p:mfrac:rfrac;..."``."""
        sizes = []
        for item in filter(None, (s.strip() for s in text.split(";"))):
            parts = item.split(":")
            if len(parts) != 4:
                raise ValueError(f"grid entry {item!r} is not n:p:mfrac:rfrac")
            n, p, mf, rf = int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])
            if n < 1 or p < 1 or not 0 < mf <= 1 or not 0 < rf <= 1:
                raise ValueError(f"grid entry {item!r} is out of range")
            sizes.append(cls(n, p, mf, rf))
        if not sizes:
            raise ValueError("empty grid")
        return sizes


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return time.perf_counter() - t0, out


def _fit_lowrank_separable(Phi, T, Y, lam):
    # T C Phi^T Phi + lam C = Y via the thin SVD of Phi; O(n m^2 + p^3).
    U, sv, _ = np.linalg.svd(Phi.T, full_matrices=False)
    lt, V = eigh(T)
    Yr = V.T @ Y @ U
    C = (Y - V @ Yr @ U.T) / lam + V @ (Yr / (np.outer(lt, sv**2) + lam)) @ U.T
    return Phi @ C.T  # m x p summary, enough for prediction


def _bench_case(cls: str, Phi, Phi_t, Y, T, em, lam):
    n, p = Y.shape[1], Y.shape[0]
    if cls == "no-structure":
        G = assemble_gram_entangled(em, Phi)
        G_t = cross_gram_entangled(em, Phi_t, Phi)
        y = vec_col(Y)
        fit_s, c = _timed(lambda: cho_solve(cho_factor(G + lam * np.eye(n * p), lower=True), y))
        pred_s, _ = _timed(lambda: unvec_col(G_t @ c, p))
    elif cls == "separable":
        K = Phi.T @ Phi
        K_t = Phi_t.T @ Phi
        fit_s, fit = _timed(lambda: fit_separable_baseline(K, T, Y, lam))
        pred_s, _ = _timed(lambda: T @ (K_t @ fit.coefficients).T)
    elif cls == "low-rank-separable":
        fit_s, S = _timed(lambda: _fit_lowrank_separable(Phi, T, Y, lam))
        pred_s, _ = _timed(lambda: T @ (Phi_t.T @ S).T)
    elif cls == "entangled":
        fit_s, fit = _timed(lambda: fit_operator_valued(em, Phi, Y, lam))
        pred_s, _ = _timed(lambda: predict_features(fit, Phi_t))
    elif cls == "entangled-ptr":
        fit_s, fit = _timed(lambda: fit_scalar(em, Phi, Y, lam))
        pred_s, _ = _timed(lambda: predict_features(fit, Phi_t))
    else:
        raise ValueError(f"unknown structure class {cls!r}; expected one of {STRUCTURE_CLASSES}")
    return fit_s, pred_s


def timing_benchmark(sizes, classes=STRUCTURE_CLASSES, repeats: int = 5, seed: int = 0,
                     lam: float = 1.0) -> list[dict]:
    """Median fit and predict seconds for every ``(size, class)`` cell, on random data.

    ``sizes`` holds :class:`BenchSize` entries (or ``(n, p, mfrac, rfrac)`` tuples).
    Test sets have ``n`` points. Rows are returned in ``sizes`` x ``classes`` order.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows = []
    for size in sizes:
        size = size if isinstance(size, BenchSize) else BenchSize(*size)
        n, p, m, r = size.n, size.p, size.m, size.r
        rng = np.random.default_rng(seed)
        Phi = rng.standard_normal((m, n)) / np.sqrt(m)
        Phi_t = rng.standard_normal((m, n)) / np.sqrt(m)
        Y = rng.standard_normal((p, n))
        Tf = rng.standard_normal((p, p))
        T = Tf @ Tf.T / p + 1e-3 * np.eye(p)
        em = EntangledModel.normalized(rng.standard_normal((m * p, r)), p)
        for cls in classes:
            fits, preds = [], []
            for _ in range(repeats):
                f, q = _bench_case(cls, Phi, Phi_t, Y, T, em, lam)
                fits.append(f)
                preds.append(q)
            rows.append({"class": cls, "n": n, "p": p, "m": m, "r": r, "repeats": repeats,
                         "seed": seed, "fit_seconds": median(fits), "predict_seconds": median(preds)})
    return rows
