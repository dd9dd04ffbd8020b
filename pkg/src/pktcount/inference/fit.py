"""Estimating reception-model coefficients from packet counts at known positions.

Each stack-count stratum is fit on its own. The Bayesian fit places i.i.d.
Normal priors on the coefficients, uses a binomial likelihood for the counts
and samples the posterior with random-walk Metropolis in coordinates whitened
by the Laplace approximation at the MAP point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import gammaln

from ..io import InputError, atomic_write_text, fmt, parse_number, read_csv, write_csv
from ..model import (
    EPS,
    FULL_NAMES,
    REDUCED_NAMES,
    QuadraticCoefficients,
    ReceptionModel,
    dbm_to_offset,
    design_row,
    offset_to_dbm,
)
from ..rng import make_rng
from .diagnostics import ess, rhat
from .mcmc import McmcConfig, PosteriorSamples, mcmc_sample

DATASET_HEADER = ["d_m", "f_hz", "power_dbm", "stacks", "c", "n_sent"]
_LOG_LO = math.log(EPS)
_LOG_HI = math.log1p(-EPS)


RHAT_LIMIT = 1.1


class EmptyStratumError(ValueError):
    pass


class IdentifiabilityError(ValueError):
    pass


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class PriorSpec:
    mu: float = 0.0
    sigma: float = 10.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"prior sigma must be positive, got {self.sigma}")
        if not math.isfinite(self.mu):
            raise ValueError("prior mu must be finite")


@dataclass(frozen=True)
class TrainingDataset:
    """Rows of ``(d, f, r, stacks, c, n_sent)`` as parallel arrays; ``r`` is the dB offset."""

    d: np.ndarray
    f: np.ndarray
    r: np.ndarray
    stacks: np.ndarray
    c: np.ndarray
    n_sent: np.ndarray

    def __post_init__(self):
        arrs = {}
        for name, kind in (("d", float), ("f", float), ("r", float), ("stacks", np.int64), ("c", np.int64), ("n_sent", np.int64)):
            arrs[name] = np.asarray(getattr(self, name), dtype=kind).ravel()
            object.__setattr__(self, name, arrs[name])
        n = arrs["d"].size
        if any(a.size != n for a in arrs.values()):
            raise ValueError("dataset columns must have equal length")
        if np.any(arrs["d"] < 0) or not np.all(np.isfinite(arrs["d"])):
            raise ValueError("distances must be finite and non-negative")
        if np.any(arrs["c"] < 0) or np.any(arrs["c"] > arrs["n_sent"]):
            raise ValueError("need 0 <= c <= n_sent on every row")
        if np.any(arrs["n_sent"] < 1):
            raise ValueError("n_sent must be >= 1")
        if np.any(arrs["stacks"] < 0):
            raise ValueError("stack counts must be non-negative")

    def __len__(self) -> int:
        return int(self.d.size)

    def strata(self) -> list[int]:
        return sorted(set(self.stacks.tolist()))

    def stratum(self, s: int) -> "TrainingDataset":
        m = self.stacks == s
        return TrainingDataset(self.d[m], self.f[m], self.r[m], self.stacks[m], self.c[m], self.n_sent[m])

    @classmethod
    def concat(cls, parts) -> "TrainingDataset":
        parts = list(parts)
        return cls(*(np.concatenate([getattr(p, k) for p in parts]) for k in ("d", "f", "r", "stacks", "c", "n_sent")))

    def save(self, path) -> None:
        rows = zip(
            self.d.tolist(), self.f.tolist(), [offset_to_dbm(v) for v in self.r.tolist()],
            self.stacks.tolist(), self.c.tolist(), self.n_sent.tolist(),
        )
        write_csv(path, DATASET_HEADER, rows)

    @classmethod
    def load(cls, path) -> "TrainingDataset":
        rows = read_csv(path, DATASET_HEADER)
        if not rows:
            raise InputError("dataset has no rows", path, 2)
        cols = {k: [] for k in DATASET_HEADER}
        for ln, rec in rows:
            for k in DATASET_HEADER:
                kind = int if k in ("stacks", "c", "n_sent") else float
                cols[k].append(parse_number(rec[k], kind, path, ln, k))
            if not (0 <= cols["c"][-1] <= cols["n_sent"][-1]) or cols["d_m"][-1] < 0 or cols["stacks"][-1] < 0:
                raise InputError("row violates 0 <= c <= n_sent, d_m >= 0, stacks >= 0", path, ln)
        return cls(
            np.array(cols["d_m"]), np.array(cols["f_hz"]),
            np.array([dbm_to_offset(v) for v in cols["power_dbm"]]),
            np.array(cols["stacks"]), np.array(cols["c"]), np.array(cols["n_sent"]),
        )


def _binom_terms(c, n):
    return gammaln(n + 1) - gammaln(c + 1) - gammaln(n - c + 1)


def _loglik_from_eta(eta, c, n, const):
    logp = np.clip(eta, _LOG_LO, _LOG_HI)
    return float(np.sum(const + c * logp + (n - c) * np.log1p(-np.exp(logp))))


def _coef_vector(theta, reduced: bool) -> np.ndarray:
    if isinstance(theta, QuadraticCoefficients):
        return theta.as_vector(reduced=reduced)
    return np.asarray(theta, dtype=float)


def log_likelihood(theta: QuadraticCoefficients, data: TrainingDataset, stacks_stratum: int) -> float:
    """Binomial log-likelihood of the stratum's counts under ``theta``."""
    sub = data.stratum(stacks_stratum)
    if len(sub) == 0:
        raise EmptyStratumError(f"no rows with stacks={stacks_stratum}")
    X = design_row(sub.d, sub.f, sub.r, reduced=False)
    eta = X @ theta.as_vector(reduced=False)
    return _loglik_from_eta(eta, sub.c, sub.n_sent, _binom_terms(sub.c, sub.n_sent))


def log_prior(theta, prior: PriorSpec, reduced: bool = True) -> float:
    """Sum of independent Normal(mu, sigma) log densities over the free coefficients."""
    if not isinstance(prior, PriorSpec):
        raise TypeError("prior must be a PriorSpec")
    v = _coef_vector(theta, reduced)
    z = (v - prior.mu) / prior.sigma
    return float(-0.5 * np.sum(z * z) - v.size * (math.log(prior.sigma) + 0.5 * math.log(2 * math.pi)))


def log_posterior(theta, data: TrainingDataset, stacks_stratum: int, prior: PriorSpec, reduced: bool = True) -> float:
    if not isinstance(theta, QuadraticCoefficients):
        names = REDUCED_NAMES if reduced else FULL_NAMES
        theta = QuadraticCoefficients.from_vector(theta, names)
    return log_likelihood(theta, data, stacks_stratum) + log_prior(theta, prior, reduced)


def _ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares via pivoted QR; raises when the design is rank deficient."""
    if X.shape[0] < X.shape[1]:
        raise RankDeficientError(f"{X.shape[0]} rows for {X.shape[1]} coefficients")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(X.shape) * np.finfo(float).eps * diag[0] * 1e3
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        raise RankDeficientError(f"design has rank {rank} < {X.shape[1]}")
    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty_like(z)
    beta[piv] = z
    return beta


def _assemble(coeffs: dict[int, QuadraticCoefficients]) -> ReceptionModel:
    """Model over strata ``0..max(coeffs)``; strata without data stay empty."""
    top = max(coeffs)
    return ReceptionModel(tuple(coeffs.get(s) for s in range(top + 1)))


def fit_log_targets(d, f, r, log_p, reduced: bool = True) -> np.ndarray:
    """Least-squares coefficients of ``log_p`` on the quadratic design in ``(d, f, r)``."""
    return _ols(design_row(d, f, r, reduced=reduced), np.asarray(log_p, float))


def fit_stratum_ml(sub: TrainingDataset, reduced: bool = True) -> np.ndarray:
    y = np.log(np.clip(sub.c / sub.n_sent, EPS, 1.0 - EPS))
    return fit_log_targets(sub.d, sub.f, sub.r, y, reduced)


def fit_reception_ml(data: TrainingDataset, reduced: bool = True) -> ReceptionModel:
    """OLS of clamped ``log(c / n_sent)`` on the (reduced or full) quadratic design."""
    names = REDUCED_NAMES if reduced else FULL_NAMES
    out = {}
    for s in data.strata():
        try:
            beta = fit_stratum_ml(data.stratum(s), reduced)
        except RankDeficientError as e:
            raise RankDeficientError(f"stratum {s}: {e}") from None
        out[s] = QuadraticCoefficients.from_vector(beta, names)
    return _assemble(out)


class _StratumPosterior:
    """Vectorized log posterior for one stratum in whitened coordinates."""

    def __init__(self, sub: TrainingDataset, prior: PriorSpec, reduced: bool):
        self.X = design_row(sub.d, sub.f, sub.r, reduced=reduced)
        self.c = sub.c.astype(float)
        self.n = sub.n_sent.astype(float)
        self.nc = self.n - self.c
        self.const = float(np.sum(_binom_terms(self.c, self.n)))
        self.prior = prior
        k = self.X.shape[1]
        self.prior_const = -k * (math.log(prior.sigma) + 0.5 * math.log(2 * math.pi))
        self.origin = np.zeros(k)
        self.L = np.eye(k)

    def log_post_b(self, b: np.ndarray) -> float:
        eta = np.clip(self.X @ b, _LOG_LO, _LOG_HI)
        ll = self.const + self.c @ eta + self.nc @ np.log1p(-np.exp(eta))
        z = (b - self.prior.mu) / self.prior.sigma
        return float(ll - 0.5 * z @ z + self.prior_const)

    def neg_and_grad(self, b: np.ndarray):
        raw = self.X @ b
        eta = np.clip(raw, _LOG_LO, _LOG_HI)
        p = np.exp(eta)
        ll = self.c @ eta + self.nc @ np.log1p(-p)
        dl = np.where(raw == eta, self.c - self.nc * p / (1 - p), 0.0)
        z = (b - self.prior.mu) / self.prior.sigma
        val = -(ll - 0.5 * z @ z)
        grad = -(self.X.T @ dl - z / self.prior.sigma)
        return val, grad

    def hessian(self, b: np.ndarray) -> np.ndarray:
        p = np.exp(np.clip(self.X @ b, _LOG_LO, _LOG_HI))
        w = self.nc * p / (1 - p) ** 2
        return (self.X.T * w) @ self.X + np.eye(self.X.shape[1]) / self.prior.sigma**2

    def log_post_z(self, z: np.ndarray) -> float:
        return self.log_post_b(self.origin + self.L @ z)


def fit_reception_bayes(
    data: TrainingDataset,
    prior: PriorSpec = PriorSpec(),
    config: McmcConfig = McmcConfig(),
    reduced: bool = True,
) -> tuple[dict[int, PosteriorSamples], ReceptionModel]:
    """Posterior draws per stratum and the model of posterior-mean coefficients."""
    names = REDUCED_NAMES if reduced else FULL_NAMES
    samples: dict[int, PosteriorSamples] = {}
    means: dict[int, QuadraticCoefficients] = {}
    for s in data.strata():
        sub = data.stratum(s)
        if np.unique(sub.d).size < 2:
            raise IdentifiabilityError(f"stratum {s}: need at least two distinct distances")
        target = _StratumPosterior(sub, prior, reduced)
        try:
            start = fit_stratum_ml(sub, reduced)
        except RankDeficientError:
            start = np.zeros(len(names))
        opt = scipy.optimize.minimize(target.neg_and_grad, start, jac=True, method="L-BFGS-B")
        b_map = opt.x if np.all(np.isfinite(opt.x)) else start
        try:
            cov = np.linalg.inv(target.hessian(b_map))
            L = np.linalg.cholesky((cov + cov.T) / 2)
        except np.linalg.LinAlgError:
            L = np.eye(len(names))
        target.origin, target.L = b_map, L
        k = len(names)
        init = np.stack([
            2.0 * make_rng(config.seed, "fit-init", s, c).standard_normal(k) for c in range(config.chains)
        ])
        stratum_cfg = McmcConfig(
            chains=config.chains, iterations=config.iterations, burn_in=config.burn_in,
            init_step=config.init_step, adapt_target=config.adapt_target,
            seed=int(make_rng(config.seed, "fit-stratum", s).integers(2**63)),
            adapt_every=config.adapt_every,
        )
        zs = mcmc_sample(target.log_post_z, init, stratum_cfg, param_names=[f"z{i}" for i in range(k)])
        draws = b_map + zs.draws @ L.T
        post = PosteriorSamples(list(names), draws, zs.acceptance_rate, zs.step_size)
        samples[s] = post
        means[s] = QuadraticCoefficients.from_vector(post.mean(), names)
    if not samples:
        raise EmptyStratumError("dataset has no rows")
    return samples, _assemble(means)


def posterior_summary(samples: dict[int, PosteriorSamples]) -> dict:
    out = {}
    for s, post in sorted(samples.items()):
        mean, sd = post.mean(), post.sd()
        rh = rhat(post) if post.n_chains > 1 else np.full(mean.size, np.nan)
        es = ess(post)
        out[str(s)] = {
            n: {
                "mean": float(fmt(mean[i])),
                "sd": float(fmt(sd[i])),
                "rhat": float(fmt(rh[i])) if np.isfinite(rh[i]) else None,
                "ess": float(fmt(es[i])),
            }
            for i, n in enumerate(post.param_names)
        }
    return out


def write_posterior(outdir, samples: dict[int, PosteriorSamples]) -> dict:
    """One draws CSV per stratum plus ``summary.json``; returns the summary.

    The summary holds per-stratum ``{mean, sd, rhat, ess}`` for each parameter
    under ``strata`` and lists parameters with ``rhat >= 1.1`` in ``rhat_flags``.
    """
    outdir = Path(outdir)
    for s, post in sorted(samples.items()):
        write_csv(outdir / f"posterior_s{s}.csv", post.param_names, post.flat().tolist())
    strata = posterior_summary(samples)
    high = sorted(f"s{s}:{n}" for s, params in strata.items() for n, v in params.items()
                  if v["rhat"] is None or not v["rhat"] < RHAT_LIMIT)
    finite = [v["rhat"] for params in strata.values() for v in params.values() if v["rhat"] is not None]
    summary = {
        "strata": strata,
        "max_rhat": max(finite) if finite else None,
        "rhat_limit": RHAT_LIMIT,
        "converged": not high,
        "rhat_flags": high,
    }
    atomic_write_text(outdir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
