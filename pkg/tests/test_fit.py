import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pktcount.inference import (
    EmptyStratumError,
    IdentifiabilityError,
    McmcConfig,
    PriorSpec,
    RankDeficientError,
    TrainingDataset,
    fit_log_targets,
    fit_reception_bayes,
    fit_reception_ml,
    log_likelihood,
    log_posterior,
    log_prior,
    write_posterior,
)
from pktcount.io import InputError
from pktcount.model import EPS, REFERENCE_COEFFS, QuadraticCoefficients, RadioConfig, ReceptionModel
from pktcount.simulator import synthetic_dataset

from oracles import log_binom_pmf, normal_logpdf

FAST = McmcConfig(chains=2, iterations=2000, burn_in=500, seed=4)
GRID = [RadioConfig.from_dbm(f, p) for p in (-20, -15, -12) for f in (1, 2, 10)]


def one_row(c, n, d=1.0, f=1.0, r=0.0, s=0):
    return TrainingDataset([d], [f], [r], [s], [c], [n])


def const_p(p):
    return QuadraticCoefficients.from_reduced(math.log(p), 0, 0, 0, 0)


class TestLikelihood:
    def test_saturated(self):
        ll = log_likelihood(QuadraticCoefficients.from_reduced(1.0, 0, 0, 0, 0), one_row(10, 10), 0)
        assert ll == pytest.approx(10 * math.log1p(-EPS), abs=1e-12)
        assert abs(ll) < 1e-7

    def test_half(self):
        ll = log_likelihood(const_p(0.5), one_row(5, 10), 0)
        assert ll == pytest.approx(log_binom_pmf(5, 10, 0.5), abs=1e-12)
        assert ll == pytest.approx(-1.4020, abs=1e-4)
        # c = 3 (or 7) of 10 at p = 0.5 gives -2.144
        assert log_likelihood(const_p(0.5), one_row(3, 10), 0) == pytest.approx(-2.144, abs=1e-3)

    def test_floor_is_finite(self):
        ll = log_likelihood(QuadraticCoefficients.from_reduced(-50.0, 0, 0, 0, 0), one_row(3, 10), 0)
        assert math.isfinite(ll) and ll < -50

    def test_empty_stratum(self):
        with pytest.raises(EmptyStratumError):
            log_likelihood(const_p(0.5), one_row(5, 10, s=0), 1)

    @given(st.tuples(*[st.floats(-1, 0.5)] * 5), st.integers(0, 2**31))
    def test_matches_oracle(self, b, seed):
        rng = np.random.default_rng(seed)
        n = rng.integers(1, 50, 6)
        data = TrainingDataset(rng.uniform(0, 8, 6), rng.choice([1.0, 2.0, 10.0], 6), rng.uniform(-8, 0, 6),
                               np.zeros(6, int), rng.integers(0, n + 1), n)
        raw = [math.exp(b[0] + b[1] * f + b[2] * r + b[3] * d + b[4] * r * d)
               for d, f, r in zip(data.d, data.f, data.r)]
        # near the upper clamp the oracle's 1 - p cancels; test_saturated covers that edge
        assume(max(raw) < 1 - 1e-6)
        want = sum(
            log_binom_pmf(int(c), int(k), max(p, EPS))
            for p, c, k in zip(raw, data.c, data.n_sent)
        )
        got = log_likelihood(QuadraticCoefficients.from_reduced(*b), data, 0)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-9)


class TestPrior:
    def test_mode(self):
        assert log_prior(np.zeros(5), PriorSpec()) == pytest.approx(5 * math.log(1 / (10 * math.sqrt(2 * math.pi))))

    def test_one_sigma(self):
        mode = log_prior(np.zeros(1), PriorSpec())
        assert log_prior(np.array([10.0]), PriorSpec()) == pytest.approx(mode - 0.5)

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            PriorSpec(sigma=0)

    @given(st.lists(st.floats(-30, 30), min_size=5, max_size=5), st.floats(-3, 3), st.floats(0.1, 20))
    def test_oracle(self, b, mu, sd):
        want = sum(normal_logpdf(x, mu, sd) for x in b)
        assert log_prior(np.array(b), PriorSpec(mu, sd)) == pytest.approx(want, rel=1e-12, abs=1e-9)


@settings(max_examples=30)
@given(st.tuples(*[st.floats(-1, 0.5)] * 5), st.integers(0, 2**31))
def test_posterior_additivity(b, seed):
    data = synthetic_dataset(QuadraticCoefficients.from_reduced(*REFERENCE_COEFFS[0]), GRID[:3], [1, 2, 3], 20, 0, seed)
    theta = QuadraticCoefficients.from_reduced(*b)
    prior = PriorSpec()
    assert log_posterior(theta, data, 0, prior) == log_likelihood(theta, data, 0) + log_prior(theta, prior)


class TestMl:
    def test_noiseless_exact(self):
        rng = np.random.default_rng(0)
        d, f, r = rng.uniform(0, 10, 40), rng.choice([1.0, 2.0, 10.0], 40), rng.uniform(-8, 0, 40)
        for s in range(3):
            b = np.array(REFERENCE_COEFFS[s])
            y = b[0] + b[1] * f + b[2] * r + b[3] * d + b[4] * r * d
            assert fit_log_targets(d, f, r, y) == pytest.approx(b, abs=1e-9)
        full = rng.normal(0, 0.3, 10)
        c = QuadraticCoefficients.from_vector(full)
        from pktcount.model import log_reception_general

        y = np.array([log_reception_general(a, g, h, c) for a, g, h in zip(d, f, r)])
        assert fit_log_targets(d, f, r, y, reduced=False) == pytest.approx(c.as_vector(reduced=False), abs=1e-9)

    def test_rank_deficient(self):
        n = 20
        d = np.linspace(1, 10, n)
        data = TrainingDataset(d, np.full(n, 2.0), np.full(n, -3.0), np.zeros(n, int), np.full(n, 5), np.full(n, 10))
        with pytest.raises(RankDeficientError):
            fit_reception_ml(data, reduced=False)

    def test_noisy_recovery(self):
        # configurations where every count is positive so the log targets carry no clamp bias
        cfgs = [RadioConfig.from_dbm(f, p) for p in (-15, -12) for f in (1, 2, 10)]
        truth = QuadraticCoefficients.from_reduced(*REFERENCE_COEFFS[0])
        data = synthetic_dataset(truth, cfgs, np.arange(1, 6), 1000, 0, seed=2)
        assert data.c.min() > 0
        got = fit_reception_ml(data).coeffs(0).as_vector()
        assert np.all(np.abs(got - truth.as_vector()) < 0.05)


PRIOR_FREE = QuadraticCoefficients.from_reduced(*REFERENCE_COEFFS[0])


class TestBayes:
    def test_recovery_small(self):
        data = synthetic_dataset(PRIOR_FREE, GRID, np.arange(1, 11), 100, 0, seed=3)
        samples, model = fit_reception_bayes(data, PriorSpec(), FAST)
        post = samples[0]
        err = np.abs(post.mean() - PRIOR_FREE.as_vector())
        assert np.all(err < 3 * post.sd())
        assert abs(model.coeffs(0).lin[0] + 0.272) < 0.05

    def test_single_distance(self):
        data = TrainingDataset(np.full(5, 2.0), [1, 2, 10, 1, 2], [0, 0, 0, -3, -3], np.zeros(5, int),
                               np.full(5, 3), np.full(5, 10))
        with pytest.raises(IdentifiabilityError, match="stratum 0"):
            fit_reception_bayes(data, PriorSpec(), FAST)

    def test_deterministic(self):
        data = synthetic_dataset(PRIOR_FREE, GRID[:4], np.arange(1, 6), 50, 0, seed=3)
        a = fit_reception_bayes(data, PriorSpec(), FAST)[1]
        b = fit_reception_bayes(data, PriorSpec(), FAST)[1]
        assert a == b

    def test_agrees_with_ml_on_large_data(self):
        cfgs = [RadioConfig.from_dbm(f, p) for p in (-15, -12) for f in (1, 2, 10)]
        data = synthetic_dataset(PRIOR_FREE, cfgs, np.arange(1, 7), 100_000, 0, seed=1)
        ml = fit_reception_ml(data).coeffs(0).as_vector()
        bayes = fit_reception_bayes(data, PriorSpec(), FAST)[1].coeffs(0).as_vector()
        assert np.all(np.abs(ml - bayes) < 0.02)

    def test_missing_stratum_left_empty(self):
        one = QuadraticCoefficients.from_reduced(*REFERENCE_COEFFS[1])
        data = synthetic_dataset(one, GRID[3:6], np.arange(1, 6), 100, 1, seed=0)
        _, model = fit_reception_bayes(data, PriorSpec(), FAST)
        assert model.max_stacks == 1 and model.missing == [0]
        with pytest.raises(ValueError, match="stack count 0"):
            model.coeffs(0)
        assert ReceptionModel.from_json(json.loads(json.dumps(model.to_json()))) == model

    def test_write_posterior(self, tmp_path):
        data = synthetic_dataset(PRIOR_FREE, GRID[:4], np.arange(1, 6), 50, 0, seed=3)
        samples, _ = fit_reception_bayes(data, PriorSpec(), FAST)
        summary = write_posterior(tmp_path, samples)
        lines = (tmp_path / "posterior_s0.csv").read_text().splitlines()
        assert lines[0] == "b0,b_f,b_r,b_d,b_rd"
        assert len(lines) == 1 + FAST.chains * FAST.kept
        on_disk = json.loads((tmp_path / "summary.json").read_text())
        assert on_disk == summary
        assert set(on_disk["strata"]["0"]["b_d"]) == {"mean", "sd", "rhat", "ess"}


class TestDatasetIo:
    def test_roundtrip(self, tmp_path):
        data = synthetic_dataset(PRIOR_FREE, GRID[:2], [1.0, 2.5], 10, 0, seed=0)
        data.save(tmp_path / "d.csv")
        text = (tmp_path / "d.csv").read_text().splitlines()
        assert text[0] == "d_m,f_hz,power_dbm,stacks,c,n_sent"
        assert text[1].split(",")[2] == "-20"  # absolute dBm on disk
        again = TrainingDataset.load(tmp_path / "d.csv")
        for k in ("d", "f", "r", "stacks", "c", "n_sent"):
            assert np.allclose(getattr(again, k), getattr(data, k))

    def test_header_only(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("d_m,f_hz,power_dbm,stacks,c,n_sent\n")
        with pytest.raises(InputError):
            TrainingDataset.load(p)

    def test_bad_row_reports_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("d_m,f_hz,power_dbm,stacks,c,n_sent\n1,1,-12,0,3,10\n1,1,-12,0,30,10\n")
        with pytest.raises(InputError, match=":3"):
            TrainingDataset.load(p)

    def test_invariants(self):
        with pytest.raises(ValueError):
            one_row(11, 10)
        with pytest.raises(ValueError):
            TrainingDataset([-1.0], [1], [0], [0], [1], [10])
