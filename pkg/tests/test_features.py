import numpy as np
import pytest

from ekl.features import FeatureMap, ScalarKernelSpec, apply_feature_map, fit_feature_map, gram_scalar

LIN = ScalarKernelSpec("linear")


def test_spec_parse_and_validation():
    assert ScalarKernelSpec.parse("gaussian:1.5") == ScalarKernelSpec("gaussian", 1.5)
    assert ScalarKernelSpec.parse("gaussian").bandwidth == 1.0
    assert ScalarKernelSpec.parse("linear") == LIN
    with pytest.raises(ValueError):
        ScalarKernelSpec("gaussian", 0.0)
    with pytest.raises(ValueError):
        ScalarKernelSpec("poly")
    with pytest.raises(ValueError):
        ScalarKernelSpec.parse("linear:2")


def test_gram_scalar_examples():
    np.testing.assert_array_equal(gram_scalar(LIN, np.eye(2), np.eye(2)), np.eye(2))
    g = ScalarKernelSpec("gaussian", 0.7)
    X = np.random.default_rng(0).standard_normal((5, 3))
    np.testing.assert_allclose(np.diag(gram_scalar(g, X, X)), 1.0)
    sigma = 1.3
    x = np.zeros((1, 2))
    z = np.array([[sigma * np.sqrt(2.0), 0.0]])
    assert gram_scalar(ScalarKernelSpec("gaussian", sigma), x, z)[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-14)
    # entry (i, j) is k(z_i, x_j)
    Z = np.random.default_rng(1).standard_normal((2, 3))
    np.testing.assert_allclose(gram_scalar(LIN, X, Z), Z @ X.T)
    with pytest.raises(ValueError):
        gram_scalar(LIN, X, np.ones((2, 4)))


def test_exact_linear_is_identity():
    X = np.random.default_rng(2).standard_normal((6, 3))
    fm = fit_feature_map(LIN, "exact-linear", None, X)
    assert fm.m == 3
    np.testing.assert_array_equal(apply_feature_map(fm, X), X.T)
    with pytest.raises(ValueError):
        fit_feature_map(LIN, "exact-linear", 5, X)
    with pytest.raises(ValueError):
        fit_feature_map(ScalarKernelSpec("gaussian", 1.0), "exact-linear", None, X)


def test_full_nystrom_is_exact():
    X = np.random.default_rng(3).standard_normal((5, 5))
    fm = fit_feature_map(LIN, "nystrom", 5, X, seed=1)
    Phi = apply_feature_map(fm, X)
    np.testing.assert_allclose(Phi.T @ Phi, X @ X.T, atol=1e-8)
    g = ScalarKernelSpec("gaussian", 1.0)
    fm = fit_feature_map(g, "nystrom", 5, X, seed=1)
    Phi = apply_feature_map(fm, X)
    np.testing.assert_allclose(Phi.T @ Phi, gram_scalar(g, X, X), atol=1e-8)


def test_nystrom_error_non_increasing_in_m():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((40, 3))
    g = ScalarKernelSpec("gaussian", 1.0)
    K = gram_scalar(g, X, X)
    errs = []
    for m in (10, 20, 40):
        # m = n reproduces K exactly
        Phi = apply_feature_map(fit_feature_map(g, "nystrom", m, X, seed=0), X)
        errs.append(np.linalg.norm(K - Phi.T @ Phi))
    assert errs[1] <= errs[0] + 1e-10 and errs[2] <= errs[1] + 1e-10


def test_rff_monte_carlo():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((50, 3))
    Z = X + 0.5 * rng.standard_normal((50, 3))
    g = ScalarKernelSpec("gaussian", 1.5)
    fm = fit_feature_map(g, "rff", 4096, X, seed=7)
    approx = np.sum(apply_feature_map(fm, X) * apply_feature_map(fm, Z), axis=0)
    exact = np.exp(-np.sum((X - Z) ** 2, axis=1) / (2 * 1.5**2))
    assert np.mean(np.abs(approx - exact)) < 0.05


def test_errors():
    X = np.ones((4, 2))
    with pytest.raises(ValueError):
        fit_feature_map(LIN, "rff", 10, X)
    with pytest.raises(ValueError):
        fit_feature_map(LIN, "nystrom", 5, X)
    with pytest.raises(ValueError):
        fit_feature_map(LIN, "nystrom", 0, X)
    with pytest.raises(ValueError):
        fit_feature_map(LIN, "svd", 2, X)
    fm = fit_feature_map(LIN, "exact-linear", None, X)
    with pytest.raises(ValueError):
        apply_feature_map(fm, np.ones((3, 3)))


@pytest.mark.parametrize("method,spec,m", [("nystrom", ScalarKernelSpec("gaussian", 2.0), 6),
                                            ("rff", ScalarKernelSpec("gaussian", 2.0), 16),
                                            ("nystrom", LIN, 3)])
def test_determinism_and_psd(method, spec, m):
    X = np.random.default_rng(6).standard_normal((10, 3))
    a = fit_feature_map(spec, method, m, X, seed=11)
    b = fit_feature_map(spec, method, m, X, seed=11)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    Phi = apply_feature_map(a, X)
    np.testing.assert_array_equal(Phi, apply_feature_map(b, X))
    G = Phi.T @ Phi
    assert np.linalg.eigvalsh(G)[0] >= -1e-8 * np.linalg.norm(G, 2)
    c = FeatureMap.from_dict(a.to_dict(), a.params)
    np.testing.assert_array_equal(apply_feature_map(c, X), Phi)
