import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kacsim import DomainError, W_p, check_comparisons, d_p, w1, w2
from kacsim.metrics import auction_assignment, brute_force_assignment, d_p_squared_matrix


def test_d_p_examples():
    e1 = np.array([1.0, 0, 0])
    assert d_p(e1, np.zeros(3), 2) == pytest.approx(math.sqrt(2))
    assert d_p(e1, e1, 5) == 0.0
    v, w = np.array([1.0, 2, 3]), np.array([0.0, 0, 0])
    # 0^0 := 1 everywhere, including at the zero vector
    assert d_p(v, w, 0) == pytest.approx(math.sqrt(3) * np.linalg.norm(v))


def test_cost_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    V, W = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    C = d_p_squared_matrix(V, W, 3.0)
    for i, j in itertools.product(range(6), range(6)):
        assert C[i, j] == pytest.approx(d_p(V[i], W[j], 3.0) ** 2, rel=1e-12, abs=1e-14)


def test_W_p_trivial():
    rng = np.random.default_rng(1)
    V = rng.normal(size=(5, 3))
    assert W_p(V, V, 4) == 0.0
    assert W_p(V[:1], V[1:2], 4) == pytest.approx(d_p(V[0], V[1], 4))
    with pytest.raises(DomainError):
        W_p(V, V[:3], 4)


@pytest.mark.parametrize("n", range(1, 8))
def test_assignment_equals_brute_force(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(10):
        V, W = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        ref = math.sqrt(brute_force_assignment(d_p_squared_matrix(V, W, 4.0)) / n)
        assert W_p(V, W, 4.0) == pytest.approx(ref, rel=1e-12)


def test_w_examples():
    mu = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    nu = np.array([[0.0, 0, 0], [2.0, 0, 0]])
    assert w1(mu, nu) == pytest.approx(0.5)
    assert w2(mu, nu) == pytest.approx(math.sqrt(0.5))


clouds = st.integers(1, 6).flatmap(
    lambda n: st.tuples(*[arrays(float, (n, 3), elements=st.floats(-5, 5)) for _ in range(2)])
)


@given(clouds, st.integers(0, 2**31))
@settings(max_examples=150, deadline=None)
def test_W_p_properties(pair, seed):
    V, W = pair
    rng = np.random.default_rng(seed)
    a = W_p(V, W, 4.0)
    assert a >= 0
    assert a == pytest.approx(W_p(W, V, 4.0), rel=1e-9, abs=1e-12)
    pv, pw = rng.permutation(len(V)), rng.permutation(len(W))
    assert W_p(V[pv], W[pw], 4.0) == pytest.approx(a, rel=1e-9, abs=1e-12)
    assert w1(V, W) <= w2(V, W) + 1e-9
    assert w1(V, W) <= W_p(V, W, 4.0) + 1e-9


def test_w1_dual_lower_bound():
    # <f, mu - nu> <= w1 for 1-Lipschitz f(v) = min_k (c_k + |v - a_k|)
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = rng.integers(1, 6)
        V, W = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        d1 = w1(V, W)
        for _ in range(100):
            a = rng.normal(size=(3, 3))
            c = rng.normal(size=3)

            def f(X):
                return np.min(c[None, :] + np.linalg.norm(X[:, None, :] - a[None, :, :], axis=-1), axis=1)

            assert f(V).mean() - f(W).mean() <= d1 + 1e-12


def test_auction_close_to_exact():
    rng = np.random.default_rng(3)
    V, W = rng.normal(size=(40, 3)), rng.normal(size=(40, 3))
    C = d_p_squared_matrix(V, W, 2.0)
    from scipy.optimize import linear_sum_assignment

    r, c = linear_sum_assignment(C)
    exact = C[r, c].sum()
    approx = auction_assignment(C, 1e-6)
    assert exact - 1e-9 <= approx <= exact + 40 * 1e-6 + 1e-9


def test_check_comparisons():
    rng = np.random.default_rng(11)
    V = rng.normal(size=(8, 3))
    rep = check_comparisons(V, V, V, 4, 8)
    assert rep.W_p == 0 and rep.lower_holds and rep.upper_holds and rep.triangle_ratio == 0
    assert rep.alpha == pytest.approx((8 - 4 - 2) / 16)
    with pytest.raises(DomainError):
        check_comparisons(V, V, V, 4, 6)
    worst = 0.0
    for _ in range(200):
        a, b, c = (rng.normal(size=(8, 3)) for _ in range(3))
        r = check_comparisons(a, b, c, 4, 8)
        assert r.lower_holds
        worst = max(worst, r.triangle_ratio)
    assert worst <= 4.0
