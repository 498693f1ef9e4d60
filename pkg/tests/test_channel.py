"""Channel model: weights, correlation structure, and the exact sampler."""

import itertools
import math

import numpy as np
import pytest
from scipy import stats
from scipy.stats import nbinom

from harqpower import (
    ChannelParams,
    correlation_factor,
    correlation_matrix,
    correlation_weight,
    mixture_weight,
    sample_amplitudes,
)


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(m=0, omegas=(1.0,), rho=0.5)
    with pytest.raises(ValueError):
        ChannelParams(m=1.5, omegas=(1.0,), rho=0.5)
    with pytest.raises(ValueError):
        ChannelParams(m=1, omegas=(1.0, -1.0), rho=0.5)
    with pytest.raises(ValueError):
        ChannelParams(m=1, omegas=(1.0,), rho=1.0)
    with pytest.raises(ValueError):
        ChannelParams(m=1, omegas=(1.0,), rho=-0.1)
    with pytest.raises(ValueError):
        ChannelParams(m=1, omegas=(1.0,), rho=0.5, delta=-1.0)
    # rho > 0 with delta = 0 makes the first-round coupling degenerate
    with pytest.raises(ValueError):
        ChannelParams(m=1, omegas=(1.0,), rho=0.5, delta=0.0)
    ChannelParams(m=1, omegas=(1.0,), rho=0.0, delta=0.0)  # independent case is fine


def test_correlation_weight_examples():
    p = ChannelParams(m=1, omegas=(1.0, 1.0), rho=0.0, delta=1.0)
    assert correlation_weight(1, p) == 0.0
    p = ChannelParams(m=1, omegas=(1.0, 1.0), rho=0.5, delta=1.0)
    # rho^2 / (1 - rho^2) and rho^4 / (1 - rho^4), direct arithmetic
    assert correlation_weight(1, p) == pytest.approx(0.25 / 0.75, rel=1e-14)
    assert correlation_weight(2, p) == pytest.approx(0.0625 / 0.9375, rel=1e-14)


def test_correlation_weight_decreasing_in_round():
    for rho in (0.2, 0.5, 0.9):
        p = ChannelParams.uniform(m=2, omega=1.0, rho=rho, rounds=6)
        weights = [correlation_weight(i, p) for i in range(1, 7)]
        assert all(a > b > 0 for a, b in zip(weights, weights[1:]))


def test_correlation_factor_single_round_is_exactly_one():
    for rho in (0.0, 0.3, 0.7, 0.95):
        for m in (1, 3):
            p = ChannelParams(m=m, omegas=(1.0,), rho=rho, delta=1.0)
            assert correlation_factor(1, p) == 1.0


def test_correlation_factor_values():
    p = ChannelParams.uniform(m=2, omega=1.0, rho=0.0, rounds=2)
    assert correlation_factor(2, p) == 1.0
    # (1.4 * 0.75 * 0.9375)^-2 = (63/64)^-2, hand evaluation of the definition
    p = ChannelParams.uniform(m=2, omega=1.0, rho=0.5, delta=1.0, rounds=2)
    assert correlation_factor(2, p) == pytest.approx((64.0 / 63.0) ** 2, rel=1e-13)


def test_mixture_weight_examples():
    p = ChannelParams.uniform(m=3, omega=1.0, rho=0.6, delta=1.0, rounds=3)
    total = sum(correlation_weight(i, p) for i in (1, 2, 3))
    assert mixture_weight([0, 0, 0], p) == pytest.approx((1 + total) ** -3, rel=1e-13)
    p1 = ChannelParams(m=1, omegas=(1.0,), rho=0.5, delta=1.0)
    assert mixture_weight([1], p1) == pytest.approx(0.1875, rel=1e-13)
    p0 = ChannelParams(m=1, omegas=(1.0, 1.0), rho=0.0)
    assert mixture_weight([0, 2], p0) == 0.0


def _degree_mass(params, l, t):
    """Total mixture mass at degree t, via the negative binomial marginal."""
    total = sum(correlation_weight(i, params) for i in range(1, l + 1))
    return nbinom.pmf(t, params.m, 1.0 / (1.0 + total))


def test_mixture_weight_degree_sums_match_marginal():
    # enumerated per-degree sums must match the closed-form degree marginal
    p = ChannelParams.uniform(m=2, omega=1.0, rho=0.6, delta=1.0, rounds=3)
    for t in range(12):
        enum = sum(
            mixture_weight(n, p)
            for n in itertools.product(range(t + 1), repeat=3)
            if sum(n) == t
        )
        assert enum == pytest.approx(_degree_mass(p, 3, t), rel=1e-12)


def test_mixture_mass_partial_sums():
    # monotone from below, and above 1 - 1e-8 at order 50 for rho <= 0.7
    # (heavier correlation needs a larger order: rho = 0.9 reaches it by 250)
    for rho, order in ((0.3, 50), (0.5, 50), (0.7, 50), (0.9, 250)):
        for m, l in ((1, 1), (2, 3), (4, 4)):
            p = ChannelParams.uniform(m=m, omega=1.0, rho=rho, rounds=l)
            masses = [_degree_mass(p, l, t) for t in range(order + 1)]
            partial = np.cumsum(masses)
            assert np.all(np.diff(partial) >= 0)
            assert np.all(partial <= 1.0 + 1e-12)
            assert partial[-1] > 1.0 - 1e-8


def test_correlation_matrix_values():
    p = ChannelParams.uniform(m=1, omega=1.0, rho=0.0, rounds=3)
    assert np.array_equal(correlation_matrix(3, p), np.eye(3))
    p = ChannelParams.uniform(m=1, omega=1.0, rho=0.5, delta=1.0, rounds=3)
    mat = correlation_matrix(2, p)
    assert mat == pytest.approx(np.array([[1.0, 0.125], [0.125, 1.0]]))
    mat3 = correlation_matrix(3, p)
    assert mat3[0, 1] == pytest.approx(0.125)
    assert mat3[0, 2] == pytest.approx(0.0625)
    assert mat3[1, 2] == pytest.approx(0.03125)
    assert np.array_equal(mat3, mat3.T)
    assert np.all(np.diag(mat3) == 1.0)


def test_correlation_matrix_positive_definite():
    for l in range(1, 9):
        for rho in (0.5, 0.9, 0.95):
            p = ChannelParams.uniform(m=1, omega=1.0, rho=rho, rounds=l)
            np.linalg.cholesky(correlation_matrix(l, p))  # raises if not PD


def test_sampler_seed_reproducibility():
    p = ChannelParams.uniform(m=2, omega=1.5, rho=0.6, rounds=3)
    a = sample_amplitudes(3, p, np.random.default_rng(77), size=1000)
    b = sample_amplitudes(3, p, np.random.default_rng(77), size=1000)
    assert np.array_equal(a, b)
    single = sample_amplitudes(3, p, np.random.default_rng(77))
    assert single.shape == (3,)
    assert np.array_equal(single, sample_amplitudes(3, p, np.random.default_rng(77)))


def test_sampler_marginal_mean():
    # law of large numbers on E|h|^2 = omega
    p = ChannelParams(m=2, omegas=(1.0,), rho=0.0)
    amps = sample_amplitudes(1, p, np.random.default_rng(11), size=1_000_000)
    assert np.mean(amps**2) == pytest.approx(1.0, abs=5e-3)


def test_sampler_marginal_distribution_ks():
    # the marginal of |h_i|^2 is Gamma(m, omega_i/m) for every round, any rho
    p = ChannelParams(m=2, omegas=(1.0, 2.0), rho=0.7, delta=1.0)
    amps = sample_amplitudes(2, p, np.random.default_rng(5), size=1_000_000)
    for i, omega in enumerate(p.omegas):
        stat, pval = stats.kstest(amps[:, i] ** 2, "gamma", args=(2.0, 0.0, omega / 2.0))
        assert pval > 1e-3, f"round {i}: KS stat {stat}, p {pval}"


def test_sampler_power_correlation():
    # Pearson correlation of the round powers equals the squared entry of the
    # underlying correlation matrix (the entry itself lives at the gaussian level)
    p = ChannelParams.uniform(m=1, omega=1.0, rho=0.5, delta=1.0, rounds=2)
    n = 1_000_000
    powers = sample_amplitudes(2, p, np.random.default_rng(3), size=n) ** 2
    emp = np.corrcoef(powers[:, 0], powers[:, 1])[0, 1]
    expected = correlation_matrix(2, p)[0, 1] ** 2
    se = (1.0 - expected**2) / math.sqrt(n)
    assert abs(emp - expected) < 3 * se


def test_sampler_independent_at_rho_zero():
    p = ChannelParams.uniform(m=1, omega=1.0, rho=0.0, rounds=2)
    n = 200_000
    powers = sample_amplitudes(2, p, np.random.default_rng(10), size=n) ** 2
    emp = np.corrcoef(powers[:, 0], powers[:, 1])[0, 1]
    assert abs(emp) < 3.0 / math.sqrt(n)
