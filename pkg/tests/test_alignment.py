import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize
from scipy.stats import ortho_group

from ekl.alignment import (AlignmentProblem, EklObjectiveConfig, UndefinedAlignmentError, centered_alignment,
                           ekl_gradient, ekl_objective, learn_entangled_kernel, random_sphere_point)
from ekl.tensor import vec_col
from oracles import central_differences, dense_alignment, dense_objective, random_psd, relerr


def instance(seed, n, p, m, r):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m * p, r)), rng.standard_normal((m, n)), rng.standard_normal((p, n))


def test_alignment_examples():
    M = np.random.default_rng(0).standard_normal((4, 4))
    assert centered_alignment(M, M) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(UndefinedAlignmentError):
        centered_alignment(random_psd(np.random.default_rng(1), 3), np.ones((3, 3)))
    M, N = np.diag([2.0, 0.0, 1.0]), np.diag([1.0, 3.0, 0.0])
    assert centered_alignment(M, N) == pytest.approx(dense_alignment(M, N), abs=1e-14)
    with pytest.raises(ValueError):
        centered_alignment(np.eye(2), np.eye(3))


@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_alignment_range_and_scale(seed, c):
    rng = np.random.default_rng(seed)
    A, B = random_psd(rng, 5), random_psd(rng, 5)
    a = centered_alignment(A, B)
    assert -1e-12 <= a <= 1 + 1e-12
    assert centered_alignment(c * A, B) == pytest.approx(a, abs=1e-12)
    S, T = rng.standard_normal((5, 5)), rng.standard_normal((5, 5))
    assert -1 - 1e-12 <= centered_alignment(S, T) <= 1 + 1e-12


@pytest.mark.parametrize("shape", [(5, 2, 3, 2), (3, 2, 8, 5), (4, 3, 10, 7)])
@pytest.mark.parametrize("gamma", [0.0, 0.3, 1.0])
def test_objective_matches_dense(shape, gamma):
    Q, Phi, Y = instance(1, *shape)
    assert ekl_objective(Q, Phi, Y, gamma) == pytest.approx(dense_objective(Q, Phi, Y, gamma), abs=1e-12)


def test_objective_endpoints():
    Q, Phi, Y = instance(2, 5, 2, 3, 2)
    f0 = ekl_objective(Q, Phi, Y, 0.0)
    f1 = ekl_objective(Q, Phi, Y, 1.0)
    assert ekl_objective(Q, Phi, Y, 0.25) == pytest.approx(0.75 * f0 + 0.25 * f1, abs=1e-14)


def test_degenerate_labels():
    Q, Phi, _ = instance(3, 4, 2, 3, 2)
    with pytest.raises(UndefinedAlignmentError):
        ekl_objective(Q, Phi, np.full((2, 4), 3.0), 1.0)
    with pytest.raises(UndefinedAlignmentError):
        ekl_objective(Q, Phi, np.full((2, 4), 3.0), 0.0)
    with pytest.raises(ValueError):
        ekl_objective(Q, Phi, np.ones((2, 5)), 0.5)
    with pytest.raises(ValueError):
        ekl_objective(np.zeros_like(Q), Phi, np.arange(8.0).reshape(2, 4), 0.5)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0])
def test_gradient_finite_differences(gamma):
    Q, Phi, Y = instance(4, 4, 2, 3, 2)
    Q /= np.linalg.norm(Q)
    g = ekl_gradient(Q, Phi, Y, gamma)
    fd = central_differences(lambda q: dense_objective(q, Phi, Y, gamma), Q)
    assert relerr(g, fd) < 1e-5


@pytest.mark.parametrize("gamma", [0.2, 0.8])
def test_gradient_equivariance(gamma):
    Q, Phi, Y = instance(5, 5, 2, 3, 4)
    R = ortho_group.rvs(4, random_state=5)
    np.testing.assert_allclose(ekl_gradient(Q @ R, Phi, Y, gamma), ekl_gradient(Q, Phi, Y, gamma) @ R,
                               atol=1e-12)
    assert ekl_objective(Q @ R, Phi, Y, gamma) == pytest.approx(ekl_objective(Q, Phi, Y, gamma), abs=1e-12)


def test_gradient_vanishes_at_maximiser():
    # Y = M Phi makes Q = vec(M) align perfectly with both ideal kernels.
    rng = np.random.default_rng(6)
    p, m, n = 2, 3, 6
    M, Phi = rng.standard_normal((p, m)), rng.standard_normal((m, n))
    Y = M @ Phi
    Q = vec_col(M)[:, None]
    Q = Q / np.linalg.norm(Q)
    for gamma in (0.0, 0.5, 1.0):
        val, g = AlignmentProblem(Phi, Y, gamma).value_and_grad(Q)
        assert val == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(g - np.vdot(g, Q) * Q) < 1e-6


def test_z_path_and_a_path_agree():
    Q, Phi, Y = instance(7, 3, 2, 6, 4)
    prob = AlignmentProblem(Phi, Y, 1.0)
    v1, g1 = prob.value_and_grad(Q)
    prob._use_z = not prob._use_z
    v2, g2 = prob.value_and_grad(Q)
    assert v1 == pytest.approx(v2, abs=1e-13)
    np.testing.assert_allclose(g1, g2, atol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        EklObjectiveConfig(gamma=1.2)
    with pytest.raises(ValueError):
        EklObjectiveConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        EklObjectiveConfig(backtrack_factor=1.0)


def test_random_sphere_point():
    Q = random_sphere_point(6, 3, seed=1)
    assert np.linalg.norm(Q) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(Q, random_sphere_point(6, 3, seed=1))


def test_learn_contract():
    rng = np.random.default_rng(8)
    p, m, n = 3, 4, 10
    Phi = rng.standard_normal((m, n))
    # labels drawn from a planted separable kernel K kron T
    T = random_psd(rng, p)
    L = np.linalg.cholesky(np.kron(Phi.T @ Phi, T) + 1e-9 * np.eye(n * p))
    Y = (L @ rng.standard_normal(n * p)).reshape(n, p).T
    cfg = EklObjectiveConfig(gamma=0.5, max_iters=200, seed=3)
    Q, trace = learn_entangled_kernel(Phi, Y, cfg, r=6, return_trace=True)
    assert Q.shape == (m * p, 6)
    assert abs(np.linalg.norm(Q) - 1.0) < 1e-12
    assert all(abs(q - 1.0) < 1e-12 for q in trace.q_norms)
    assert all(b >= a for a, b in zip(trace.objective, trace.objective[1:]))
    init = ekl_objective(random_sphere_point(m * p, 6, 3), Phi, Y, 0.5)
    assert trace.objective[0] == pytest.approx(init)
    assert trace.objective[-1] >= init
    assert trace.reason in ("gradient", "max_iters", "line search")
    with pytest.raises(ValueError):
        learn_entangled_kernel(Phi, Y, cfg, r=m * p + 1)


def test_learn_reaches_tolerance():
    Q, Phi, Y = instance(9, 6, 2, 3, 3)
    cfg = EklObjectiveConfig(gamma=0.5, max_iters=3000, grad_tol=1e-6)
    _, trace = learn_entangled_kernel(Phi, Y, cfg, r=3, return_trace=True)
    assert trace.converged and trace.grad_norm[-1] < 1e-6


def test_learn_matches_multistart_dense_optimiser():
    _, Phi, Y = instance(10, 5, 2, 2, 1)
    r, gamma = 3, 0.5
    mp = Phi.shape[0] * Y.shape[0]
    cfg = EklObjectiveConfig(gamma=gamma, max_iters=3000, grad_tol=1e-8)
    Q = learn_entangled_kernel(Phi, Y, cfg, r)
    ours = ekl_objective(Q, Phi, Y, gamma)
    best = -np.inf
    for s in range(20):
        q0 = np.random.default_rng(100 + s).standard_normal(mp * r)
        res = minimize(lambda q: -dense_objective(q.reshape(mp, r), Phi, Y, gamma), q0, method="BFGS")
        best = max(best, -res.fun)
    assert ours >= best - 1e-3
