"""End-to-end acceptance criteria, one test per criterion.

Each test records a single ``PASS``/``FAIL`` line with the measured values
before asserting; the lines are echoed in the pytest terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from pktcount.cli import main
from pktcount.experiments import grid_configs, radio_range_m, run_walk
from pktcount.inference import McmcConfig, PriorSpec, TrainingDataset, fit_reception_bayes, mcmc_sample
from pktcount.inference.diagnostics import rhat
from pktcount.model import REFERENCE_COEFFS, QuadraticCoefficients, RadioConfig, reception_prob
from pktcount.simulator import GroundTruth, simulate_trace, synthetic_dataset
from pktcount.trace import window_counts

from oracles import grid_moments, log_binom_pmf

pytestmark = pytest.mark.slow

WALK_SEEDS = (0, 1, 2, 3, 4)


ACCEPTANCE_LINES: list[str] = []


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, detail


@pytest.fixture(scope="module")
def recovered():
    parts = [synthetic_dataset(QuadraticCoefficients.from_reduced(*REFERENCE_COEFFS[s]), grid_configs(),
                               np.arange(1, 11), 100, s, seed=2024) for s in range(3)]
    data = TrainingDataset(*(np.concatenate([getattr(p, k) for p in parts])
                             for k in ("d", "f", "r", "stacks", "c", "n_sent")))
    t0 = time.perf_counter()
    samples, model = fit_reception_bayes(data, PriorSpec(), McmcConfig(chains=4, iterations=5000, burn_in=1000, seed=7))
    return samples, model, time.perf_counter() - t0


@pytest.fixture(scope="module")
def grid_runs():
    t0 = time.perf_counter()
    runs = [run_walk(radio, seed) for seed in WALK_SEEDS for radio in grid_configs()]
    return runs, time.perf_counter() - t0


def test_c1_sampler_matches_quadrature():
    c, n = 7, 20

    def logf(p):
        return log_binom_pmf(c, n, p) if 0 < p < 1 else -math.inf

    t0 = time.perf_counter()
    res = mcmc_sample(lambda th: logf(th[0]), [0.5], McmcConfig(chains=4, iterations=20000, burn_in=5000, seed=11))
    secs = time.perf_counter() - t0
    mean, sd = grid_moments(logf, 0.0, 1.0)
    got_m, got_s = float(res.mean()[0]), float(res.sd()[0])
    em, es = abs(got_m - mean) / mean, abs(got_s - sd) / sd
    report("C1 sampler", em < 0.02 and es < 0.02 and secs < 10,
           f"mean {got_m:.4f} vs {mean:.4f} ({em:.2%}), sd {got_s:.4f} vs {sd:.4f} ({es:.2%}), {secs:.1f} s")


def test_c2_coefficient_recovery(recovered):
    samples, model, secs = recovered
    worst_z, worst_bd, worst_rhat = 0.0, 0.0, 0.0
    for s in range(3):
        post = samples[s]
        truth = np.array(REFERENCE_COEFFS[s])
        worst_z = max(worst_z, float(np.max(np.abs(post.mean() - truth) / post.sd())))
        worst_bd = max(worst_bd, abs(model.coeffs(s).lin[0] - truth[3]))
        worst_rhat = max(worst_rhat, float(np.max(rhat(post))))
    report("C2 recovery", worst_z < 3 and worst_bd < 0.05 and worst_rhat < 1.1 and secs < 120,
           f"max |z| {worst_z:.2f}, max |b_d err| {worst_bd:.4f}, max rhat {worst_rhat:.4f}, {secs:.1f} s")


def test_c3_monotonic_trends(recovered):
    _, model, _ = recovered
    d = np.linspace(0, 12, 121)
    bad = []
    for s in range(3):
        for f in (1.0, 2.0, 10.0):
            for r in (-8.0, -3.0, 0.0):
                p = reception_prob(model, s, d, f, r)
                if np.any(np.diff(p) > 0) or np.any(np.diff(p)[p[1:] > 1e-9] >= 0):
                    bad.append(f"d s={s} f={f} r={r}")
                pf = [float(reception_prob(model, s, d, g, r)[60]) for g in (1.0, 2.0, 10.0)]
                if not pf[0] >= pf[1] >= pf[2]:
                    bad.append(f"f s={s} r={r}")
            pr = np.array([reception_prob(model, s, d, f, r) for r in (-8.0, -3.0, 0.0)])
            if np.any(np.diff(pr, axis=0) < 0):
                bad.append(f"r s={s} f={f}")
    br = [model.coeffs(s).lin[2] for s in range(3)]
    ok = not bad and br[0] < br[1] < br[2]
    report("C3 trends", ok, f"violations {bad or 'none'}, b_r by stacks {np.round(br, 3).tolist()}")


def test_c4_pcmcl_beats_mcl(grid_runs):
    runs, secs = grid_runs
    wins = sum(r.pcmcl_report.mean < r.mcl_report.mean for r in runs)
    red = np.mean([(r.mcl_report.mean - r.pcmcl_report.mean) / r.mcl_report.mean * 100 for r in runs])
    frac = wins / len(runs)
    report("C4 relative", frac >= 0.9 and red >= 30 and secs < 600,
           f"PC-MCL better in {wins}/{len(runs)} runs, mean reduction {red:.1f}%, {secs:.0f} s for the grid")


def test_c5_absolute_scale(grid_runs):
    runs, _ = grid_runs
    sel = [r for r in runs if r.radio.power_dbm == -15 and r.radio.freq_hz == 10]
    overall = max(r.pcmcl_report.mean for r in sel)
    within = max(r.pcmcl_report.within_aisle_mean for r in sel)
    report("C5 absolute", overall <= 2.0 and within <= 1.0,
           f"-15 dBm / 10 Hz worst seed: overall {overall:.2f} m, within-aisle {within:.2f} m")


def test_c6_mcl_range_rule(grid_runs):
    runs, _ = grid_runs
    ratios = [r.mcl_report.mean / (0.4 * radio_range_m(r.radio.power_dbm)) for r in runs]
    lo, hi = min(ratios), max(ratios)
    report("C6 MCL scale", lo >= 0.5 and hi <= 1.5, f"error / (0.4 d0) spans [{lo:.2f}, {hi:.2f}]")


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c7_determinism(tmp_path, monkeypatch):
    args = ["--fit-iters", "600", "--fit-burn-in", "200", "--particles", "200",
            "--chains", "4", "--iters", "1500", "--burn-in", "500", "--seed", "5"]
    trees = {}
    for threads in ("1", "4", "4"):
        monkeypatch.setenv("PKTCOUNT_THREADS", threads)
        out = tmp_path / f"t{threads}_{len(trees)}"
        assert main(["reproduce", "--out", str(out)] + args) in (0, 3)
        trees[out.name] = _tree(out)
    first, *rest = trees.values()
    same = all(t == first for t in rest)
    report("C7 determinism", same, f"{len(first)} files identical across {len(trees)} runs (threads 1, 4, 4)")


def test_c8_simulator_fidelity(layout, model):
    b = layout.beacons[0]
    d = 3.0
    x, y = b.x + math.sqrt(d * d - (b.y - 0.35) ** 2), 0.35
    radio = RadioConfig.from_dbm(1, -12)
    p = float(reception_prob(model, 0, d, radio.freq_hz, radio.power_db))
    gt = GroundTruth.stationary(x, y, 10_000.0, layout)
    wins = window_counts(simulate_trace(gt, layout, model, radio, seed=77), radio, t_end_ms=10_000_000)
    counts = np.array([w.counts.get(b.id, 0) for w in wins])
    N = radio.n_sent
    obs = np.bincount(counts, minlength=N + 1)
    exp = stats.binom.pmf(np.arange(N + 1), N, p) * counts.size
    keep = exp >= 5
    obs_p = np.append(obs[keep], obs[~keep].sum())
    exp_p = np.append(exp[keep], exp[~keep].sum())
    pval = stats.chisquare(obs_p, exp_p * obs_p.sum() / exp_p.sum()).pvalue
    report("C8 fidelity", counts.size == 1000 and pval > 0.001,
           f"{counts.size} windows, chi-square p = {pval:.3g}")
