"""Kernel learning by centered alignment on the unit Frobenius sphere.

The objective for ``Q`` (``mp x r``, ``||Q||_F = 1``) is

    (1 - gamma) * A(Phi^T tr_p(D) Phi, Y^T Y) + gamma * A(G, y y^T)

with ``D = Q Q^T``, ``G = Z Z^T``, ``Z = (Phi^T kron I_p) Q`` and
``y = vec_col(Y)``. Both terms are evaluated without forming ``G``:

* the partial-trace term lives in ``n x n`` through ``B = tr_p(D)`` (``m x m``);
* the full term needs ``<G_c, y_c y_c^T> = ||Q^T w||^2`` with
  ``w = vec_col(Y_c Phi^T)`` and ``||G_c||_F = ||Q^T A Q||_F`` with
  ``A = Phi Phi^T kron I_p - v v^T / (np)`` and ``v = (Phi kron I_p) 1``.

When ``np`` is small relative to ``mp`` the second term is computed from the
factor ``Z`` directly, whichever is cheaper.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .tensor import center

log = logging.getLogger(__name__)


class UndefinedAlignmentError(ValueError):
    """A centered argument of the alignment is identically zero."""


def centered_alignment(M, N) -> float:
    """``<M_c, N_c>_F / (||M_c||_F ||N_c||_F)`` with ``X_c = H X H``."""
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    if M.shape != N.shape:
        raise ValueError(f"shape mismatch: {M.shape} vs {N.shape}")
    # Alignment is scale-invariant; rescaling keeps the norms clear of underflow.
    sm, sn = np.abs(M).max(initial=0.0), np.abs(N).max(initial=0.0)
    Mc = center(M / sm) if sm > 0 else M
    Nc = center(N / sn) if sn > 0 else N
    nm, nn = np.linalg.norm(Mc), np.linalg.norm(Nc)
    tol = 1e-14 * M.shape[0]
    if nm <= tol or nn <= tol:
        raise UndefinedAlignmentError("alignment is undefined when a centered matrix vanishes")
    return float(np.vdot(Mc, Nc) / (nm * nn))


@dataclass(frozen=True)
class EklObjectiveConfig:
    gamma: float = 0.5
    max_iters: int = 500
    grad_tol: float = 1e-6
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    seed: int = 0
    armijo: float = 1e-4
    min_step: float = 1e-14

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.max_iters < 0 or self.grad_tol <= 0 or self.step_init <= 0:
            raise ValueError("max_iters >= 0, grad_tol > 0 and step_init > 0 are required")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")


class AlignmentProblem:
    """Objective and Euclidean gradient for fixed ``Phi`` (``m x n``) and ``Y`` (``p x n``).

    Data-only quantities are precomputed once, so repeated evaluations during
    optimisation cost ``O(m^2 p r + m p r^2)`` each.
    """

    def __init__(self, Phi, Y, gamma: float):
        Phi = np.asarray(Phi, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Phi.ndim != 2 or Y.ndim != 2 or Phi.shape[1] != Y.shape[1]:
            raise ValueError(f"Phi (m x n) and Y (p x n) must share n, got {Phi.shape} and {Y.shape}")
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        self.Phi, self.Y, self.gamma = Phi, Y, float(gamma)
        self.m, self.n = Phi.shape
        self.p = Y.shape[0]

        if gamma < 1.0:
            Ky_c = center(Y.T @ Y)
            nrm = np.linalg.norm(Ky_c)
            if nrm <= 1e-14 * max(np.abs(Y).max(initial=0.0) ** 2, 1e-300) * self.n:
                raise UndefinedAlignmentError("labels give a vanishing centered output kernel Y^T Y")
            self._Ky_c = Ky_c / nrm
        if gamma > 0.0:
            yc = Y - Y.mean()
            ynorm2 = float(np.vdot(yc, yc))
            if ynorm2 <= 1e-28 * max(np.abs(Y).max(initial=0.0) ** 2, 1e-300) * Y.size:
                raise UndefinedAlignmentError("labels are constant; y y^T centers to zero")
            self._yc = yc / np.sqrt(ynorm2)
            # w = (Phi kron I_p) y_c, stored as its (m, p) view.
            self._w = (self._yc @ Phi.T).T
            # v = (Phi kron I_p) 1 has (m, p) view s[k] for every output.
            self._s = Phi.sum(axis=1)
            self._PPt = Phi @ Phi.T
            self._use_z = self.n * self.p < self.m * self.p // 2

    # -- helpers -------------------------------------------------------------

    def _q3(self, Q):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != self.m * self.p:
            raise ValueError(f"Q must have m*p = {self.m * self.p} rows, got shape {Q.shape}")
        nrm = np.linalg.norm(Q)
        if nrm == 0:
            raise ValueError("Q must be nonzero")
        return (Q / nrm).reshape(self.m, self.p, -1), nrm

    def _ptr_term(self, Q3, grad: bool):
        Phi = self.Phi
        m, p, r = Q3.shape
        Qm = Q3.reshape(m, p * r)
        B = Qm @ Qm.T
        S = Phi.T @ B @ Phi
        Sc = center(S)
        ns = np.linalg.norm(Sc)
        if ns <= 1e-14 * max(np.abs(S).max(initial=0.0), 1e-300) * self.n:
            raise UndefinedAlignmentError("partial-trace kernel centers to zero")
        f = float(np.vdot(Sc, self._Ky_c))
        val = f / ns
        if not grad:
            return val, None
        # dA/dS, already centered and symmetric.
        GS = (self._Ky_c - val * Sc / ns) / ns
        P = Phi @ GS @ Phi.T
        return val, 2.0 * (P @ Qm).reshape(m, p, r)

    def _full_term(self, Q3, grad: bool):
        m, p, r = Q3.shape
        N = self.n * p
        Q2 = Q3.reshape(m * p, r)
        a = self._w.reshape(-1) @ Q2
        f = float(a @ a)
        if self._use_z:
            Z = (self.Phi.T @ Q3.reshape(m, p * r)).reshape(N, r)
            Zc = Z - Z.mean(axis=0, keepdims=True)
            small = Zc @ Zc.T if N < r else Zc.T @ Zc
            h = np.linalg.norm(small)
        else:
            # A Q with A = Phi Phi^T kron I_p, then W = Q^T A Q - u u^T / N.
            AQ = (self._PPt @ Q3.reshape(m, p * r)).reshape(m * p, r)
            u = (self._s @ Q3.reshape(m, p * r)).reshape(p, r).sum(axis=0)
            W = Q2.T @ AQ
            W -= np.outer(u, u) / N
            h = np.linalg.norm(W)
        if h <= 1e-300:
            raise UndefinedAlignmentError("entangled Gram centers to zero")
        val = f / h
        if not grad:
            return val, None
        if self._use_z:
            ZcW = small @ Zc if N < r else Zc @ small
            dZ = 2.0 * np.outer(self._yc.T.ravel(), a) / h - 2.0 * f * ZcW / h**3
            g = (self.Phi @ dZ.reshape(self.n, p * r)).reshape(m * p, r)
        else:
            # d||W||/dQ = 2 A_c Q W / h, with A_c Q = A Q - v u^T / N.
            AQW = AQ @ W
            AQW -= np.outer(np.repeat(self._s, p), (u @ W) / N)
            g = 2.0 * np.outer(self._w.ravel(), a) / h - 2.0 * f * AQW / h**3
        return val, g.reshape(m, p, r)

    # -- public --------------------------------------------------------------

    def value(self, Q) -> float:
        Q3, _ = self._q3(Q)
        return self._evaluate(Q3, grad=False)[0]

    def value_and_grad(self, Q):
        """Objective and Euclidean gradient with respect to ``Q``.

        The objective is invariant to the scale of ``Q``, so the gradient of
        the normalised evaluation is the raw gradient divided by ``||Q||``.
        """
        Q3, nrm = self._q3(Q)
        val, g3 = self._evaluate(Q3, grad=True)
        g = g3.reshape(self.m * self.p, -1) / nrm
        # Remove the radial component left by rounding; exact gradient is tangent.
        Qn = Q3.reshape(self.m * self.p, -1)
        g = g - np.vdot(g, Qn) * Qn
        return val, g

    def _evaluate(self, Q3, grad: bool):
        val = 0.0
        g3 = None
        if self.gamma < 1.0:
            v1, d1 = self._ptr_term(Q3, grad)
            val += (1.0 - self.gamma) * v1
            if grad:
                g3 = (1.0 - self.gamma) * d1
        if self.gamma > 0.0:
            v2, d2 = self._full_term(Q3, grad)
            val += self.gamma * v2
            if grad:
                g3 = self.gamma * d2 if g3 is None else g3 + self.gamma * d2
        return val, g3


def ekl_objective(Q, Phi, Y, gamma: float) -> float:
    """Alignment objective of ``Q``; ``Q`` is normalised to unit Frobenius norm first."""
    return AlignmentProblem(Phi, Y, gamma).value(Q)


def ekl_gradient(Q, Phi, Y, gamma: float) -> np.ndarray:
    """Euclidean gradient of :func:`ekl_objective` with respect to ``Q``."""
    return AlignmentProblem(Phi, Y, gamma).value_and_grad(Q)[1]


def random_sphere_point(mp: int, r: int, seed) -> np.ndarray:
    Q = np.random.default_rng(seed).standard_normal((mp, r))
    return Q / np.linalg.norm(Q)


@dataclass
class OptimizationTrace:
    objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    q_norms: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""


def learn_entangled_kernel(Phi, Y, cfg: EklObjectiveConfig, r: int, Q0=None,
                           return_trace: bool = False):
    """Maximise the alignment objective over ``Q`` on the unit Frobenius sphere.

    Projected gradient ascent: the Euclidean gradient is projected onto the
    tangent space, a trial step is retracted by renormalisation, and Armijo
    backtracking accepts only non-decreasing iterates. The first trial step of
    each iteration is a Barzilai-Borwein estimate (``step_init`` on the first
    iteration); backtracking keeps the ascent monotone regardless.
    """
    Phi = np.asarray(Phi, dtype=float)
    Y = np.asarray(Y, dtype=float)
    m, p = Phi.shape[0], Y.shape[0]
    if not 1 <= r <= m * p:
        raise ValueError(f"rank r = {r} must satisfy 1 <= r <= mp = {m * p}")
    problem = AlignmentProblem(Phi, Y, cfg.gamma)
    if Q0 is None:
        Q = random_sphere_point(m * p, r, cfg.seed)
    else:
        Q = np.asarray(Q0, dtype=float)
        Q = Q / np.linalg.norm(Q)
    trace = OptimizationTrace()
    f, g = problem.value_and_grad(Q)
    trace.objective.append(f)
    trace.q_norms.append(float(np.linalg.norm(Q)))
    step = cfg.step_init
    prev = None
    for it in range(cfg.max_iters):
        G = g - np.vdot(g, Q) * Q
        gnorm = float(np.linalg.norm(G))
        trace.grad_norm.append(gnorm)
        if gnorm < cfg.grad_tol:
            trace.converged, trace.reason = True, "gradient"
            break
        if prev is not None:
            dQ, dG = Q - prev[0], G - prev[1]
            denom = -float(np.vdot(dQ, dG))
            if denom > 0:
                step = float(np.vdot(dQ, dQ)) / denom
            else:
                step = step / cfg.backtrack_factor
        # Keep the tangent move below one unit of arc length.
        t = min(step, max(cfg.step_init, 1.0 / gnorm))
        accepted = False
        first = True
        while t >= cfg.min_step:
            trial = Q + t * G
            trial /= np.linalg.norm(trial)
            # The first trial usually passes, so fetch its gradient in the same sweep.
            if first:
                ft, gt = problem.value_and_grad(trial)
                first = False
            else:
                ft, gt = problem.value(trial), None
            if ft >= f + cfg.armijo * t * gnorm**2:
                accepted = True
                break
            t *= cfg.backtrack_factor
        if not accepted:
            trace.reason = "line search"
            break
        prev = (Q, G)
        Q = trial
        g = gt if gt is not None else problem.value_and_grad(Q)[1]
        assert ft >= f, "accepted step decreased the objective"
        f = ft
        step = t
        trace.objective.append(f)
        trace.steps.append(t)
        trace.q_norms.append(float(np.linalg.norm(Q)))
    else:
        trace.reason = "max_iters"
    log.debug("alignment ascent stopped (%s) after %d steps at %.6g",
              trace.reason, len(trace.steps), f)
    return (Q, trace) if return_trace else Q
