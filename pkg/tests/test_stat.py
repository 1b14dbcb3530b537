import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mmdhd.errors import DimensionMismatch, DomainError, TooFewPairs
from mmdhd.kernel import BandwidthRule, KernelSpec
from mmdhd.model import derive_seed, mean_shift_model, random_rotation, sample_pair
from mmdhd.stat import (cq_statistic, empirical_variance_v, h_value, h_values, linear_test,
                        mmd2_linear, mmd2_u, normal_cdf, normal_quantile, permutation_threshold)

G1 = KernelSpec("gaussian", 1.0)
LIN = KernelSpec("linear")


def test_h_value_examples():
    assert h_value(G1, [0.3, 1], [2, 2], [0.3, 1], [2, 2]) == 0.0
    # four kernel terms 1, 1, e^-1, e^-1
    assert h_value(G1, [0], [0], [1], [1]) == pytest.approx(2 - 2 * math.exp(-1), abs=1e-15)
    assert h_value(G1, [0], [0], [1], [1]) == pytest.approx(1.2642411, abs=1e-7)
    with pytest.raises(DimensionMismatch):
        h_value(G1, [0, 1], [0], [1], [1])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 3), elements=st.floats(-5, 5)))
def test_h_value_symmetric_and_bounded(p):
    a = h_value(G1, p[0], p[1], p[2], p[3])
    b = h_value(G1, p[1], p[0], p[3], p[2])
    assert a == pytest.approx(b, abs=1e-15)
    assert -2 < a < 2


def test_mmd2_linear_single_pair():
    mean, h = mmd2_linear(G1, [[0], [0]], [[1], [1]])
    assert mean == pytest.approx(1.2642411, abs=1e-7)
    assert h.shape == (1,)


def test_mmd2_linear_identical_samples_is_zero():
    X = np.random.default_rng(0).normal(size=(10, 4))
    assert mmd2_linear(G1, X, X.copy())[0] == 0.0


@pytest.mark.parametrize("n", [2, 4, 6, 10, 20])
def test_pairing_matches_explicit_h_values(n):
    rng = np.random.default_rng(n)
    X, Y = rng.normal(size=(n, 3)), rng.normal(size=(n, 3)) + 0.3
    ref = np.mean([h_value(G1, X[i], X[i + 1], Y[i], Y[i + 1]) for i in range(0, n, 2)])
    assert mmd2_linear(G1, X, Y)[0] == pytest.approx(ref, abs=1e-12)


def test_odd_sample_size_warns_and_trims():
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
    with pytest.warns(UserWarning, match="odd"):
        mean, h = mmd2_linear(G1, X, Y)
    assert h.size == 3
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert linear_test(X, Y, G1).n == 6
    with pytest.raises(TooFewPairs):
        mmd2_linear(G1, X[:1], Y[:1])
    with pytest.raises(DimensionMismatch):
        mmd2_linear(G1, X, Y[:, :1])


def test_empirical_variance_v():
    assert empirical_variance_v([0.3, 0.3, 0.3]) == 0.0
    assert empirical_variance_v([0.0, 2.0]) == 4.0
    with pytest.raises(TooFewPairs):
        empirical_variance_v([1.0])


def test_linear_test_outcome_invariants():
    X, Y = sample_pair(mean_shift_model(20, 2.0), 60, 4)
    out = linear_test(X, Y, BandwidthRule.median(), 0.05)
    assert out.n == 60
    assert out.statistic == pytest.approx(math.sqrt(60) * out.mmd2_l / math.sqrt(out.v))
    assert out.reject == (out.statistic > out.z_alpha)
    assert out.p_value == pytest.approx(1 - normal_cdf(out.statistic))
    assert out.gamma_used > 0
    assert out.to_dict()["degenerate"] is False


def test_linear_test_degenerate():
    X = np.random.default_rng(2).normal(size=(8, 3))
    out = linear_test(X, X.copy(), G1, 0.05)
    assert out.degenerate and not out.reject and out.p_value == 1.0
    with pytest.raises(DomainError):
        linear_test(X, X, G1, 1.5)


def test_normal_quantile_reference_values():
    # high-precision references for the inverse normal CDF
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert normal_quantile(0.95) == pytest.approx(1.6448536269514722, abs=1e-12)
    assert normal_quantile(1e-10) == pytest.approx(-6.361340902404056, abs=1e-9)
    for p in (0.0, 1.0, -0.1):
        with pytest.raises(DomainError):
            normal_quantile(p)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-12, 1 - 1e-12))
def test_normal_quantile_inverts_cdf(p):
    assert float(normal_cdf(normal_quantile(p))) == pytest.approx(p, rel=1e-8, abs=1e-14)


def test_mmd2_u_examples():
    assert mmd2_u(LIN, [[1.0], [-1.0]], [[1.0], [-1.0]]) == pytest.approx(-2.0)
    assert mmd2_u(LIN, [[1.0], [2.0]], [[0.0], [1.0]]) == pytest.approx(0.5)
    assert cq_statistic([[1.0], [2.0]], [[0.0], [1.0]]) == pytest.approx(0.5)


def test_cq_with_zero_y_keeps_within_x_term():
    X = np.random.default_rng(5).normal(size=(6, 3))
    n = len(X)
    within = sum(X[i] @ X[j] for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    assert cq_statistic(X, np.zeros_like(X)) == pytest.approx(within, rel=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_cq_equals_linear_mmd2_u(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(2, 12), rng.integers(1, 8)
    X, Y = rng.normal(size=(n, d)), rng.normal(size=(n, d)) + 1.0
    cq, mu = cq_statistic(X, Y), mmd2_u(LIN, X, Y)
    assert cq == pytest.approx(mu, rel=1e-10, abs=1e-12)


def test_orthogonal_invariance():
    rng = np.random.default_rng(8)
    X, Y = rng.normal(size=(30, 6)), rng.normal(size=(30, 6)) + 0.4
    U = random_rotation(6, 1)
    k = KernelSpec("gaussian", 2.5)
    assert mmd2_linear(k, X @ U.T, Y @ U.T)[0] == pytest.approx(mmd2_linear(k, X, Y)[0], abs=1e-9)
    assert mmd2_u(k, X @ U.T, Y @ U.T) == pytest.approx(mmd2_u(k, X, Y), abs=1e-9)


def test_null_statistic_centred():
    model = mean_shift_model(10, 0.0)
    stats = np.array([linear_test(*sample_pair(model, 40, derive_seed(3, "n", r)),
                                  KernelSpec("gaussian", math.sqrt(10))).statistic
                      for r in range(400)])
    assert abs(stats.mean()) <= 4 * stats.std(ddof=1) / math.sqrt(stats.size)


def test_permutation_threshold():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(15, 2))
    stat = lambda a, b: mmd2_u(G1, a, b)  # noqa: E731
    thr, p = permutation_threshold(stat, X, X.copy(), 0.05, 99, 7)
    assert p >= 1 / 100 and p > 0.2
    assert (thr, p) == permutation_threshold(stat, X, X.copy(), 0.05, 99, 7)
    with pytest.raises(ValueError):
        permutation_threshold(stat, X, X, 0.05, 0, 7)
    Y = rng.normal(size=(15, 2)) + 3.0
    thr, p = permutation_threshold(stat, X, Y, 0.05, 99, 7)
    assert p == pytest.approx(1 / 100) and stat(X, Y) > thr


def test_permutation_null_rejection_rate():
    stat = lambda a, b: mmd2_u(G1, a, b)  # noqa: E731
    rejections = 0
    for r in range(60):
        rng = np.random.default_rng(derive_seed(11, "perm-null", r))
        X, Y = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))
        rejections += permutation_threshold(stat, X, Y, 0.1, 49, r)[1] <= 0.1
    assert rejections / 60 <= 0.1 + 3 * math.sqrt(0.09 / 60)


def test_h_values_gaussian_bounds():
    X, Y = sample_pair(mean_shift_model(3, 5.0), 500, 0)
    h = h_values(KernelSpec("gaussian", 0.5), X, Y)
    assert np.all((h > -2) & (h < 2))
