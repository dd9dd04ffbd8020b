"""Convergence diagnostics: split-chain R-hat and effective sample size."""

from __future__ import annotations

import numpy as np

from .mcmc import PosteriorSamples


def _as_draws(samples) -> np.ndarray:
    d = samples.draws if isinstance(samples, PosteriorSamples) else np.asarray(samples, float)
    if d.ndim == 2:
        d = d[:, :, None]
    if d.ndim != 3:
        raise ValueError("draws must have shape (chains, iterations[, params])")
    return d


def rhat(samples) -> np.ndarray:
    """Split-chain potential scale reduction, one value per parameter.

    Each chain is cut into halves and the halves compared with the
    Gelman-Rubin ratio ``sqrt(1 + B / (n W))``. Dropping the usual
    ``(n - 1) / n`` factor on ``W`` keeps the statistic >= 1 exactly.
    """
    d = _as_draws(samples)
    m, n, _ = d.shape
    if m < 2:
        raise ValueError("rhat needs at least two chains")
    h = n // 2
    if h < 2:
        raise ValueError("chains too short to split")
    halves = np.concatenate([d[:, :h], d[:, n - h:]], axis=0)
    means = halves.mean(axis=1)
    W = halves.var(axis=1, ddof=1).mean(axis=0)
    B = h * means.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(1.0 + B / (h * W))
    r = np.where(W > 0, r, np.where(B > 0, np.inf, 1.0))
    return r


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance along axis 1 via FFT."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft, axis=1)
    ac = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, :n]
    return ac / n


def ess(samples) -> np.ndarray:
    """Effective sample size per parameter, pooled across chains.

    Autocorrelations combine the chains' autocovariances with the between-chain
    variance; the sum runs over consecutive lag pairs and stops at the first
    negative pair sum. Zero-variance parameters get ESS 1.
    """
    d = _as_draws(samples)
    m, n, p = d.shape
    if m * n < 10 or n < 4:
        raise ValueError("ess needs at least 10 draws")
    out = np.empty(p)
    for j in range(p):
        x = d[:, :, j]
        acov = _autocov(x)
        W = acov[:, 0].mean() * n / (n - 1)
        B = n * x.mean(axis=1).var(ddof=1) if m > 1 else 0.0
        var_plus = (n - 1) / n * W + B / n
        if not var_plus > 0:
            out[j] = 1.0
            continue
        rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
        rho[0] = 1.0
        tau = -1.0
        for k in range(0, n - 1, 2):
            pair = rho[k] + rho[k + 1]
            if pair < 0:
                break
            tau += 2.0 * pair
        out[j] = min(m * n / max(tau, 1e-12), m * n)
    return out
