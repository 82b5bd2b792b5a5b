import numpy as np
import pytest
from hypothesis import given, strategies as st

from ekl.separability import ppt_check
from ekl.tensor import BlockMatrix
from oracles import bell_state, random_psd


def test_bell_state_is_entangled():
    res = ppt_check(BlockMatrix(bell_state(), 2))
    assert res.entangled and res.verdict == "entangled"
    assert res.min_eig == pytest.approx(-0.5, abs=1e-10)
    assert str(res).startswith("entangled min_eig=-0.5")


@pytest.mark.parametrize("q", [1, 2, 3, 6])
def test_identity_holds(q):
    assert ppt_check(np.eye(6), q).verdict == "ppt_holds"


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4))
def test_separable_products_hold(seed, b, q):
    rng = np.random.default_rng(seed)
    K, T = random_psd(rng, b, rank=max(1, b - 1)), random_psd(rng, q)
    res = ppt_check(np.kron(K, T), q)
    assert not res.entangled


def test_scale_and_relabelling_invariance():
    rng = np.random.default_rng(1)
    # a random entangled Gram: sum of two entangled rank-one terms
    v = rng.standard_normal(9)
    A = np.outer(v, v) + 0.01 * np.eye(9)
    base = ppt_check(A, 3)
    assert ppt_check(1e6 * A, 3).entangled == base.entangled
    perm = np.array([2, 0, 1])
    idx = (perm[:, None] * 3 + np.arange(3)).ravel()
    assert ppt_check(A[np.ix_(idx, idx)], 3).entangled == base.entangled
    assert ppt_check(A[np.ix_(idx, idx)], 3).min_eig == pytest.approx(base.min_eig, abs=1e-12)


def test_input_validation():
    with pytest.raises(ValueError):
        ppt_check(np.array([[1.0, 2.0], [0.0, 1.0]]), 1)
    with pytest.raises(ValueError):
        ppt_check(np.diag([1.0, -1.0]), 1)
    with pytest.raises(ValueError):
        ppt_check(np.eye(4))
    with pytest.raises(ValueError):
        ppt_check(np.zeros((4, 4)), 2)
