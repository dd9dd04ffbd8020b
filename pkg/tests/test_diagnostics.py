import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pktcount.inference import McmcConfig, PosteriorSamples, ess, mcmc_sample, rhat

from oracles import ar1_ess


def test_identical_chains():
    # split R-hat compares half-chains, so every half is a copy of the same draws
    y = np.random.default_rng(0).standard_normal(500)
    x = np.concatenate([y, y])
    assert rhat(np.stack([x, x, x]))[0] == pytest.approx(1.0, abs=1e-6)


def test_copied_iid_chains_near_one():
    x = np.random.default_rng(0).standard_normal(20_000)
    assert rhat(np.stack([x, x]))[0] == pytest.approx(1.0, abs=1e-3)


def test_well_mixed_normal():
    res = mcmc_sample(lambda t: -0.5 * float(t[0]) ** 2, [0.0], McmcConfig(chains=4, iterations=4000, burn_in=1000, seed=2))
    assert rhat(res)[0] < 1.05


def test_disjoint_constant_chains():
    d = np.stack([np.zeros(100), np.ones(100)])
    assert rhat(d)[0] > 1.5


def test_single_chain_rejected():
    with pytest.raises(ValueError):
        rhat(np.zeros((1, 100)))


def test_iid_ess():
    x = np.random.default_rng(1).standard_normal((4, 2500))
    assert ess(x)[0] == pytest.approx(10_000, rel=0.2)


def test_constant_ess():
    assert ess(np.full((2, 50), 3.0))[0] == 1.0


def test_ar1_ess():
    rng = np.random.default_rng(7)
    rho, n, m = 0.9, 20_000, 4
    e = rng.standard_normal((m, n))
    x = np.empty((m, n))
    x[:, 0] = e[:, 0] / np.sqrt(1 - rho * rho)
    for t in range(1, n):
        x[:, t] = rho * x[:, t - 1] + e[:, t]
    assert ess(x)[0] == pytest.approx(ar1_ess(m * n, rho), rel=0.3)


def test_too_few_draws():
    with pytest.raises(ValueError):
        ess(np.zeros((1, 9)))


def test_accepts_posterior_samples():
    d = np.random.default_rng(3).standard_normal((2, 200, 3))
    ps = PosteriorSamples(["a", "b", "c"], d, np.ones(2))
    assert rhat(ps).shape == (3,) and ess(ps).shape == (3,)


@settings(max_examples=40)
@given(st.integers(2, 5), st.integers(10, 200), st.integers(0, 2**31))
def test_rhat_at_least_one(m, n, seed):
    d = np.random.default_rng(seed).standard_normal((m, n)) * np.random.default_rng(seed + 1).uniform(0.1, 3)
    assert np.all(rhat(d) >= 1.0 - 1e-12)


@settings(max_examples=40)
@given(st.integers(1, 4), st.integers(10, 300), st.integers(0, 2**31))
def test_ess_bounded(m, n, seed):
    d = np.random.default_rng(seed).standard_normal((m, n))
    e = ess(d)[0]
    assert 0 < e <= m * n
