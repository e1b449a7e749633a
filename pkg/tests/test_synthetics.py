import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amdtest.errors import InputError, UnsupportedSpecError
from amdtest.estimator import DiscreteDistribution
from amdtest.kernels import GaussianParams
from amdtest.synthetics import (Discrete, IsotropicGaussian, IsotropicLaplace, MixtureSpec,
                                closed_form_dk, gaussian_kernel_mean, laplace_gaussian_pair,
                                mean_shift_pair, sample, true_sign)


def test_mixture_at_one_reproduces_p():
    P, Q = mean_shift_pair()
    a = sample(MixtureSpec(P, Q, 1.0), 50, np.random.default_rng(3))
    b = sample(P, 50, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_mixture_at_zero_is_q_distributed():
    P, Q = mean_shift_pair(shift=10.0)
    Z = sample(MixtureSpec(P, Q, 0.0), 500, np.random.default_rng(4))
    assert np.all(Z[:, 0] > 3.0)


def test_mixture_fraction():
    P, Q = mean_shift_pair(shift=20.0)
    Z = sample(MixtureSpec(P, Q, 0.3), 20000, np.random.default_rng(5))
    frac = np.mean(Z[:, 0] < 10.0)
    assert abs(frac - 0.3) < 4 * np.sqrt(0.3 * 0.7 / 20000)


def test_gaussian_sample_mean():
    X = sample(IsotropicGaussian(np.zeros(2), 1.0), 10_000, np.random.default_rng(6))
    assert X.shape == (10_000, 2)
    assert np.all(np.abs(X.mean(axis=0)) < 4 / np.sqrt(10_000))


def test_laplace_moments():
    X = sample(IsotropicLaplace(np.array([1.0, -1.0]), 0.5), 100_000, np.random.default_rng(7))
    np.testing.assert_allclose(X.mean(axis=0), [1.0, -1.0], atol=0.01)
    np.testing.assert_allclose(X.var(axis=0), 2 * 0.25, rtol=0.03)


def test_laplace_gaussian_pair_variance_matched():
    P, Q = laplace_gaussian_pair(3)
    assert 2 * P.scale ** 2 == pytest.approx(Q.stdev ** 2)
    assert P.dim == Q.dim == 3


def test_discrete_single_point():
    spec = Discrete(DiscreteDistribution([[2.0, -1.0]], [1.0]))
    X = sample(spec, 8, np.random.default_rng(0))
    np.testing.assert_array_equal(X, np.tile([2.0, -1.0], (8, 1)))


def test_spec_validation():
    with pytest.raises(InputError):
        IsotropicGaussian(np.zeros(2), 0.0)
    with pytest.raises(InputError):
        IsotropicLaplace(np.zeros(2), -1.0)
    P, Q = mean_shift_pair(2)
    with pytest.raises(InputError):
        MixtureSpec(P, Q, 1.5)
    with pytest.raises(InputError):
        MixtureSpec(P, IsotropicGaussian(np.zeros(3)), 0.5)
    with pytest.raises(InputError):
        sample(P, 0, np.random.default_rng(0))
    with pytest.raises(UnsupportedSpecError):
        sample("not a spec", 3, np.random.default_rng(0))


def test_kernel_mean_identity_monte_carlo():
    r = np.random.default_rng(8)
    a = IsotropicGaussian(np.array([0.5, 0.0]), 0.7)
    b = IsotropicGaussian(np.array([-0.5, 1.0]), 1.3)
    sigma = 0.9
    x, y = sample(a, 200_000, r), sample(b, 200_000, r)
    vals = np.exp(-np.sum((x - y) ** 2, axis=1) / (2 * sigma ** 2))
    se = vals.std() / np.sqrt(vals.size)
    assert abs(vals.mean() - gaussian_kernel_mean(sigma, a, b)) < 4 * se


def test_closed_form_reference_value():
    P = IsotropicGaussian(np.zeros(1))
    Q = IsotropicGaussian(np.ones(1))
    v = closed_form_dk(GaussianParams(0.0), MixtureSpec(P, Q, 1.0))
    expected = (1 / np.sqrt(3)) * (1 - np.exp(-1 / 6))
    assert v == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.08864, abs=1e-5)


def test_closed_form_zero_cases():
    P, Q = mean_shift_pair()
    k = GaussianParams(0.3)
    assert closed_form_dk(k, MixtureSpec(P, Q, 0.5)) == 0.0
    assert closed_form_dk(k, MixtureSpec(P, P, 0.2)) == 0.0


@given(st.floats(0, 1), st.floats(-1.5, 1.5), st.floats(0.1, 3.0))
@settings(max_examples=100, deadline=None)
def test_closed_form_sign_and_symmetry(nu, logbw, shift):
    P, Q = mean_shift_pair(2, shift)
    k = GaussianParams(logbw)
    v = closed_form_dk(k, MixtureSpec(P, Q, nu))
    assert v == pytest.approx(-closed_form_dk(k, MixtureSpec(Q, P, 1 - nu)), abs=1e-15)
    if nu > 0.5 + 1e-9:
        assert v > 0
    elif nu < 0.5 - 1e-9:
        assert v < 0


def test_closed_form_unsupported():
    P, Q = laplace_gaussian_pair()
    with pytest.raises(UnsupportedSpecError):
        closed_form_dk(GaussianParams(0.0), MixtureSpec(P, Q, 0.2))


def test_true_sign():
    P, Q = mean_shift_pair()
    assert true_sign(MixtureSpec(P, Q, 0.0)) == -1
    assert true_sign(MixtureSpec(P, Q, 0.9)) == 1
    with pytest.raises(InputError):
        true_sign(MixtureSpec(P, Q, 0.5))
