import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from mmdhd.errors import DimensionMismatch, MomentUndefined
from mmdhd.model import (CoordinateLaw, ModelSpec, central_moments, derive_seed, mean_shift_model,
                         random_rotation, sample_pair)


def _quad_moment(law, k):
    lo, hi = law.support()
    return integrate.quad(lambda x: x**k * law.pdf(x), lo, hi, epsabs=1e-11, limit=200)[0]


def test_normal_moments():
    m = central_moments(CoordinateLaw("standard-normal"), 4)
    assert (m.sigma2, m.mu3, m.mu4) == (1.0, 0.0, 3.0)
    assert m.mu6 is None


def test_t4_has_no_fourth_moment():
    with pytest.raises(MomentUndefined):
        central_moments(CoordinateLaw("student-t", dof=4), 4)
    assert central_moments(CoordinateLaw("t", dof=4), 2).sigma2 == pytest.approx(2.0)


def test_t5_moments_match_quadrature():
    law = CoordinateLaw("t", dof=5)
    m = central_moments(law, 4)
    # frozen from direct integration of the t5 density
    assert m.sigma2 == pytest.approx(5 / 3, rel=1e-12)
    assert m.mu4 == pytest.approx(25.0, rel=1e-12)
    assert _quad_moment(law, 2) == pytest.approx(m.sigma2, rel=1e-8)
    assert _quad_moment(law, 3) == pytest.approx(0.0, abs=1e-8)
    assert _quad_moment(law, 4) == pytest.approx(m.mu4, rel=1e-6)


@pytest.mark.parametrize("law", [CoordinateLaw("uniform", 2.0), CoordinateLaw("normal", 0.7),
                                 CoordinateLaw("t", 1.3, 9.0)])
def test_moments_match_quadrature(law):
    m = central_moments(law, 6)
    for k, ref in [(2, m.sigma2), (4, m.mu4), (6, m.mu6)]:
        assert _quad_moment(law, k) == pytest.approx(ref, rel=1e-6)


def test_law_validation():
    with pytest.raises(ValueError):
        CoordinateLaw("uniform-centered", scale=0.0)
    with pytest.raises(ValueError):
        CoordinateLaw("t")
    with pytest.raises(ValueError):
        CoordinateLaw("normal", dof=3)
    with pytest.raises(ValueError):
        CoordinateLaw("cauchy")
    with pytest.raises(ValueError):
        central_moments(CoordinateLaw(), 5)


def test_sample_pair_is_deterministic():
    model = mean_shift_model(7, 1.5, CoordinateLaw("t", 1.0, 5.0), rotation_seed=3)
    X1, Y1 = sample_pair(model, 11, 42)
    X2, Y2 = sample_pair(model, 11, 42)
    assert np.array_equal(X1, X2) and np.array_equal(Y1, Y2)
    X3, _ = sample_pair(model, 11, 43)
    assert not np.array_equal(X1, X3)


def test_sample_pair_means():
    model = ModelSpec(2, [0.5, -1.0], [0.0, 0.0])
    X, Y = sample_pair(model, 100_000, 1)
    assert np.all(np.abs(X.mean(0) - model.mu_p) < 0.02)
    assert np.all(np.abs(Y.mean(0)) < 0.02)


@pytest.mark.parametrize("law", [CoordinateLaw("normal", 1.5), CoordinateLaw("uniform", 1.0),
                                 CoordinateLaw("t", 1.0, 10.0)])
def test_sample_moments_converge(law):
    m = central_moments(law, 6)
    X, _ = sample_pair(ModelSpec(1, [0.0], [0.0], law), 100_000, 9)
    x = X[:, 0]
    n = x.size
    # standard errors of the sample second and fourth moments
    se2 = math.sqrt((m.mu4 - m.sigma2**2) / n)
    assert abs(np.mean(x**2) - m.sigma2) < 4 * se2
    se4 = math.sqrt((np.mean(x**8) - np.mean(x**4) ** 2) / n)
    assert abs(np.mean(x**4) - m.mu4) < 4 * se4


def test_sample_pair_rejects_infinite_variance():
    with pytest.raises(MomentUndefined):
        sample_pair(ModelSpec(1, [0.0], [0.0], CoordinateLaw("t", dof=2)), 5, 0)
    with pytest.raises(ValueError):
        sample_pair(ModelSpec(1, [0.0], [0.0]), 0, 0)


def test_model_shapes_and_snr():
    with pytest.raises(DimensionMismatch):
        ModelSpec(3, [0, 0], [0, 0, 0])
    m = mean_shift_model(16, 2.0, CoordinateLaw("normal", 3.0))
    assert np.allclose(m.delta, 2.0 * 3.0 / 4.0)
    assert m.delta_norm == pytest.approx(6.0)
    assert m.snr == pytest.approx(2.0)


def test_rotation_d1_is_plus_or_minus_one():
    U = random_rotation(1, 5)
    assert U.shape == (1, 1) and abs(abs(U[0, 0]) - 1.0) < 1e-15


def _det3(a):
    return (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))


@pytest.mark.parametrize("seed", range(5))
def test_rotation_orthogonal(seed):
    U = random_rotation(5, seed)
    assert np.max(np.abs(U @ U.T - np.eye(5))) <= 1e-10
    assert abs(abs(_det3(random_rotation(3, seed))) - 1.0) <= 1e-10
    assert np.array_equal(U, random_rotation(5, seed))


def test_rotation_copy_is_writable():
    U = random_rotation(4, 0)
    U[0, 0] = 99.0
    assert random_rotation(4, 0)[0, 0] != 99.0


def test_derive_seed_is_stable_and_distinct():
    a = derive_seed(1, "rep", 0)
    assert a == derive_seed(1, "rep", 0)
    assert len({a, derive_seed(1, "rep", 1), derive_seed(2, "rep", 0), derive_seed(1, "x", 0)}) == 4
    assert 0 <= a < 2**64
    with pytest.raises(ValueError):
        derive_seed(-1)


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_rotation_property(d, seed):
    U = random_rotation(d, seed)
    assert np.allclose(U.T @ U, np.eye(d), atol=1e-10)
