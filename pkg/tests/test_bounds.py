import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from penselect import bounds
from penselect.bounds import (KAPPA, ChainingParams, bernstein_tail_prob, bernstein_threshold, chaining_H,
                              chi2_threshold, chi_inf_tail, covering_bound, generic_H, joint_sup_level,
                              oracle_constant, packing_check, remainder_R, sup_threshold,
                              truncated_moment_bound, u_factor)
from penselect.errors import DeltaOutOfRange, InvalidPartitionSizes, KNotGreaterThanOne, PhiTooSmall

nonneg = st.floats(0, 50, allow_nan=False)


def H_direct(D, v, b, kmax=400):
    # Oracle: plain summation far past the truncation point.
    tot = 0.0
    for k in range(kmax):
        L = (k + 1) * math.log(2) + math.log(9) * 2 * D + math.log(5) * 2 * k * D
        tot += 2.0 ** -k * (v * math.sqrt(2 * L) + b * L)
    return tot


def test_kappa():
    assert KAPPA == 18.0
    assert ChainingParams(1, 0, 1).kappa == 18.0
    with pytest.raises(ValueError):
        ChainingParams(1, 0, 1, kappa=10.0)


def test_bernstein_examples():
    assert bernstein_threshold(1, 0, 0) == 0
    assert bernstein_threshold(1, 0, 2) == pytest.approx(2.0)
    assert bernstein_threshold(4, 1, 1) == pytest.approx(math.sqrt(8) + 1)
    assert bernstein_tail_prob(0, 1, 0) == 1.0
    assert bernstein_tail_prob(2, 1, 0) == pytest.approx(math.exp(-2))


@given(nonneg, nonneg, nonneg, st.floats(0.01, 10))
def test_bernstein_tail_monotone(x, v2, c, dx):
    if v2 + c * x == 0:
        return
    assert bernstein_tail_prob(x + dx, v2 + 0.1, c) <= bernstein_tail_prob(x, v2 + 0.1, c) + 1e-15


def test_sup_threshold_examples():
    assert sup_threshold(ChainingParams(1, 0, 1), 0) == pytest.approx(18)
    assert sup_threshold(ChainingParams(0, 1, 2), 3) == pytest.approx(90)
    a = sup_threshold(ChainingParams(1, 1, 3), 2)
    b = sup_threshold(ChainingParams(2, 1, 3), 2)
    assert b - a == pytest.approx(18 * math.sqrt(5))


@pytest.mark.parametrize("D", [1, 2, 5, 17, 50])
def test_chaining_H_matches_long_sum(D):
    for v, b in [(1, 0), (0, 1), (0.3, 2.0)]:
        assert chaining_H(D, v=v, b=b) == pytest.approx(H_direct(D, v, b), rel=1e-12)


def test_chaining_H_domination():
    for D in range(1, 51):
        for v, b in [(1, 0), (0, 1), (1, 1)]:
            assert chaining_H(ChainingParams(v, b, D)) < 14 * math.sqrt(D) * v + 18 * D * b


def test_chaining_H_d1_margin():
    # 4 log 90 < 18 by about 1e-3: the tightest case of the domination.
    assert chaining_H(1, v=0, b=1) == pytest.approx(4 * math.log(90), rel=1e-12)


@given(st.integers(1, 50), st.floats(0, 5), st.floats(0, 5), st.floats(0.1, 10))
def test_chaining_H_homogeneous(D, v, b, a):
    assert chaining_H(D, v=a * v, b=a * b) == pytest.approx(a * chaining_H(D, v=v, b=b), rel=1e-12, abs=1e-12)


@given(st.integers(1, 50), st.floats(0, 100), st.sampled_from([(1, 0), (0, 1), (1, 1)]))
def test_concavity_step(D, x, vb):
    v, b = vb
    lhs = 14 * math.sqrt(D * v * v) + 2 * math.sqrt(2 * v * v * x) + 18 * b * (D + x)
    assert lhs <= sup_threshold(ChainingParams(v, b, D), x) * (1 + 1e-12)


def test_generic_H():
    assert generic_H(1, 1, [1, 1]) == pytest.approx(math.sqrt(2 * math.log(2)) + math.log(2))
    want = (math.sqrt(2 * math.log(2 * 4)) + math.log(8)) + 0.5 * (math.sqrt(2 * math.log(4 * 16)) + math.log(64))
    assert generic_H(1, 1, [1, 4, 4]) == pytest.approx(want)
    assert generic_H(3, 6, [1, 4, 4]) == pytest.approx(3 * generic_H(1, 2, [1, 4, 4]))
    with pytest.raises(InvalidPartitionSizes):
        generic_H(1, 1, [2, 4])
    with pytest.raises(InvalidPartitionSizes):
        generic_H(1, 1, [1, 4, 2])


def test_oracle_constant():
    assert oracle_constant(2) == 10.0
    assert oracle_constant(1.5) == pytest.approx(33.0)
    assert 1 < oracle_constant(1e6) < 1 + 1e-5
    with pytest.raises(KNotGreaterThanOne):
        oracle_constant(1.0)
    Ks = np.linspace(1.01, 200, 2000)
    C = np.array([oracle_constant(k) for k in Ks])
    assert np.all(C > 1) and np.all(np.diff(C) < 0)


def test_u_factor():
    assert u_factor(1, 0, 1, 1, 2, 0) == pytest.approx(2 * math.log(2))
    n = 100
    assert u_factor(1, 0, 1, 1, n, math.log(n)) / u_factor(1, 0, 1, 1, n, 0) == pytest.approx(1.5)
    # Histogram regime: Lambda_2 <= 1/(a log n), z = b log n gives u <= (c+s)(b+2)/a.
    a, b, s, c = 0.5, 1.3, 1.0, 0.4
    u = u_factor(s, c, 1, 1 / (a * math.log(n)), n, b * math.log(n))
    assert u == pytest.approx((c + s) * (b + 2) / a)


def test_remainder_R():
    assert remainder_R(1, 1, 1, 1, 0, 1) == pytest.approx(362)
    assert remainder_R(0.5, 0, 3, 1, 800, 2) == pytest.approx(324 * 0.25 * 2)
    assert remainder_R(1, 1, 2, 2, 1, 0) == pytest.approx(2 * math.exp(-1))


def test_chi2_threshold():
    assert chi2_threshold(1, 0, 5, 1, 0) == pytest.approx(324)
    assert chi2_threshold(1, 1, 9, 2, 2) == pytest.approx(2592)
    assert chi2_threshold(1, 1, 9, 3, 5) / 8 == pytest.approx(chi2_threshold(1, 1, 9, 1, 0))


def test_chi_inf_tail():
    assert chi_inf_tail(1, 0, 1, 1e-9, 2) == 1.0
    assert chi_inf_tail(1, 0, 1, 2, 2) == pytest.approx(4 * math.exp(-2))
    xs = np.linspace(0.5, 20, 50)
    vals = [chi_inf_tail(1, 0.5, 0.3, x, 100) for x in xs]
    assert np.all(np.diff(vals) <= 0)
    assert chi_inf_tail(1, 0.5, 0.2, 5, 100) <= chi_inf_tail(1, 0.5, 0.3, 5, 100)


def test_joint_sup_level_solves_fixed_point():
    for s, c, u, D, x in [(1, 0, 2, 3, 1), (1, 1, 5, 4, 2), (0.3, 2, 0.7, 1, 0.5)]:
        z = joint_sup_level(s, c, u, D, x)
        assert z == pytest.approx(sup_threshold(ChainingParams(s, c * u / z, D), x), rel=1e-12)


def test_covering_bound():
    assert covering_bound(1, 1) == 3
    assert covering_bound(2, 0.5) == 25
    with pytest.raises(DeltaOutOfRange):
        covering_bound(1, 2)
    with pytest.raises(DeltaOutOfRange):
        covering_bound(1, 0)


def test_packing_check_grid_interval():
    grid = np.linspace(-1, 1, 2001)[:, None]
    rep = packing_check(1, 0.5, trials=0, candidates=grid)
    assert 4 <= rep["found_size"] <= 5 and rep["ok"]
    pts = rep["points"][:, 0]
    assert np.min(np.abs(pts[:, None] - pts[None, :]) + 10 * np.eye(pts.size)) > 0.5


def test_packing_check_random():
    rep = packing_check(2, 0.5, trials=5000, seed=1)
    assert rep["ok"] and rep["found_size"] > 5
    assert np.all(np.linalg.norm(rep["points"], axis=1) <= 1)


def test_truncated_moment_bound():
    val = truncated_moment_bound(1, 0.5, 0, math.sqrt(2), 1)
    assert val == pytest.approx(math.sqrt(2) * math.exp(-2) * (1 + math.e / 2), rel=1e-12)
    assert val == pytest.approx(0.4516, abs=1e-4)
    assert truncated_moment_bound(2, 0.5, 0, math.sqrt(2), 1) == pytest.approx(2 * val)
    with pytest.raises(PhiTooSmall):
        truncated_moment_bound(1, 1, 1, 1, 2)


def test_truncated_moment_quadrature_oracle():
    # X with P(X >= x) = min(1, exp(-phi(x))), a = 1, p = 2.
    for alpha, beta, x0 in [(0.5, 0.0, 2.0), (1.0, 0.5, 4.0), (0.2, 1.0, 5.0)]:
        phi = lambda x: x * x / (2 * (alpha + beta * x))
        tail = lambda x: min(1.0, math.exp(-phi(x)))
        # E[X^2 1{X >= x0}] = x0^2 P(X >= x0) + int_{x0}^inf 2x P(X >= x) dx
        integral, _ = quad(lambda x: 2 * x * tail(x), x0, np.inf, epsabs=1e-12)
        assert x0 ** 2 * tail(x0) + integral <= truncated_moment_bound(1, alpha, beta, x0, 2)
