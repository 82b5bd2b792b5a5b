"""Scalar kernels and finite-dimensional feature maps.

Feature matrices are ``m x t``: column ``i`` is the feature vector of sample
``i``. Inputs are ``t x d`` (one sample per row).

The gaussian kernel is ``k(x, z) = exp(-||x - z||^2 / (2 sigma^2))`` so that
``k(x, x) = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

KERNELS = ("linear", "gaussian")
METHODS = ("exact-linear", "nystrom", "rff")


@dataclass(frozen=True)
class ScalarKernelSpec:
    kind: str = "linear"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNELS}")
        if self.kind == "gaussian":
            if self.bandwidth is None or not self.bandwidth > 0:
                raise ValueError(f"gaussian bandwidth must be positive, got {self.bandwidth}")

    @classmethod
    def parse(cls, text: str) -> "ScalarKernelSpec":
        """Parse ``linear`` or ``gaussian[:sigma]`` (sigma defaults to 1)."""
        kind, _, arg = text.partition(":")
        if kind == "gaussian":
            return cls("gaussian", float(arg) if arg else 1.0)
        if arg:
            raise ValueError(f"kernel {kind!r} takes no parameter")
        return cls(kind)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bandwidth": self.bandwidth}


def gram_scalar(spec: ScalarKernelSpec, X, Z) -> np.ndarray:
    """Exact kernel matrix with entry ``(i, j) = k(z_i, x_j)``, shape ``t x n``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"feature dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    if spec.kind == "linear":
        return Z @ X.T
    if not spec.bandwidth or spec.bandwidth <= 0:
        raise ValueError("gaussian bandwidth must be positive")
    sq = cdist(Z, X, "sqeuclidean")
    return np.exp(-sq / (2.0 * spec.bandwidth**2))


def _inv_sqrt_psd(K: np.ndarray, rel_clip: float = 1e-10) -> np.ndarray:
    w, V = np.linalg.eigh((K + K.T) / 2)
    cut = rel_clip * max(w[-1], 0.0)
    inv = np.zeros_like(w)
    keep = w > cut
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (V * inv) @ V.T


@dataclass(frozen=True)
class FeatureMap:
    """A fitted approximation ``phi_hat`` with ``k(x, z) ~ <phi_hat(x), phi_hat(z)>``.

    ``params`` holds the fitted arrays:

    * exact-linear: nothing
    * nystrom: ``landmarks`` (m x d) and ``whitening`` (m x m)
    * rff: ``frequencies`` (d x m) and ``phases`` (m,)
    """

    spec: ScalarKernelSpec
    method: str
    m: int
    d: int
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def apply(self, X) -> np.ndarray:
        return apply_feature_map(self, X)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "method": self.method, "m": self.m,
                "d": self.d, "seed": self.seed}

    @classmethod
    def from_dict(cls, meta: dict, params: dict) -> "FeatureMap":
        spec = ScalarKernelSpec(**meta["spec"])
        return cls(spec, meta["method"], int(meta["m"]), int(meta["d"]), meta.get("seed"),
                   {k: np.asarray(v, dtype=float) for k, v in params.items()})


def fit_feature_map(spec: ScalarKernelSpec, method: str, m: int | None, X, seed: int | None = 0) -> FeatureMap:
    """Fit a feature map on the rows of ``X``.

    Nystrom samples ``m`` landmarks uniformly without replacement and whitens
    with the pseudo-inverse square root of the landmark Gram block. Random
    Fourier features use ``sqrt(2/m) cos(w^T x + b)`` and require a gaussian
    kernel. ``exact-linear`` is the identity map (``m = d``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if method not in METHODS:
        raise ValueError(f"unknown feature method {method!r}; expected one of {METHODS}")
    if method == "exact-linear":
        if spec.kind != "linear":
            raise ValueError("exact-linear features require the linear kernel")
        if m is not None and m != d:
            raise ValueError(f"exact-linear features have m = d = {d}, got m = {m}")
        return FeatureMap(spec, method, d, d, seed)
    if m is None or m < 1:
        raise ValueError(f"feature dimension must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    if method == "nystrom":
        if m > n:
            raise ValueError(f"Nystrom needs m <= n, got m = {m} > n = {n}")
        idx = np.sort(rng.choice(n, size=m, replace=False))
        landmarks = X[idx].copy()
        whitening = _inv_sqrt_psd(gram_scalar(spec, landmarks, landmarks))
        return FeatureMap(spec, method, m, d, seed, {"landmarks": landmarks, "whitening": whitening})
    if spec.kind != "gaussian":
        raise ValueError("random Fourier features are only defined for the gaussian kernel")
    frequencies = rng.standard_normal((d, m)) / spec.bandwidth
    phases = rng.uniform(0.0, 2.0 * np.pi, size=m)
    return FeatureMap(spec, method, m, d, seed, {"frequencies": frequencies, "phases": phases})


def apply_feature_map(fm: FeatureMap, X) -> np.ndarray:
    """Feature matrix ``Phi`` of shape ``m x t`` for the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size == fm.d else X.reshape(-1, fm.d)
    if X.shape[1] != fm.d:
        raise ValueError(f"feature map expects d = {fm.d} inputs, got {X.shape[1]}")
    if fm.method == "exact-linear":
        return X.T.copy()
    if fm.method == "nystrom":
        return fm.params["whitening"] @ gram_scalar(fm.spec, X, fm.params["landmarks"])
    proj = X @ fm.params["frequencies"] + fm.params["phases"]
    return np.sqrt(2.0 / fm.m) * np.cos(proj).T
