"""Random-walk Metropolis with per-block updates and burn-in step adaptation.

Two ways to describe the target:

* a plain callable ``log_post(theta) -> float``; every coordinate is then
  updated in turn with a Gaussian random-walk proposal.
* additionally ``groups`` and ``local``. Each group is an integer array of
  shape ``(n_blocks, block_size)`` naming parameter indices. Blocks within one
  group must be conditionally independent given all other parameters, and
  ``local(theta, g)`` returns the ``n_blocks`` log-density terms that depend
  on each block. All blocks of a group are proposed at once and accepted or
  rejected individually, which is an exact Metropolis-within-Gibbs sweep.

Chains use generators derived from ``(seed, chain index)`` so they can run in
any order or in parallel with identical results.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..rng import make_rng


class SamplerError(RuntimeError):
    """The chain could not make progress (e.g. nothing accepted during burn-in)."""


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    iterations: int = 20000
    burn_in: int = 5000
    init_step: float | tuple[float, ...] = 0.1
    adapt_target: float = 0.25
    seed: int = 0
    adapt_every: int = 50

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("chains must be >= 2 so convergence can be checked")
        if not (0 <= self.burn_in < self.iterations):
            raise ValueError("need 0 <= burn_in < iterations")
        steps = np.atleast_1d(np.asarray(self.init_step, float))
        if np.any(~np.isfinite(steps)) or np.any(steps <= 0):
            raise ValueError("step sizes must be positive")
        if not (0 < self.adapt_target < 1):
            raise ValueError("adapt_target must lie in (0, 1)")
        if self.adapt_every < 1:
            raise ValueError("adapt_every must be >= 1")

    @property
    def kept(self) -> int:
        return self.iterations - self.burn_in


@dataclass
class PosteriorSamples:
    param_names: list[str]
    draws: np.ndarray  # (chains, kept, params)
    acceptance_rate: np.ndarray  # (chains,)
    step_size: np.ndarray = field(default=None)  # (chains, params), frozen after burn-in

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[-1])

    def mean(self) -> np.ndarray:
        return self.flat().mean(axis=0)

    def sd(self) -> np.ndarray:
        return self.flat().std(axis=0, ddof=1)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.draws[..., self.param_names.index(name)]


def thread_count(n_tasks: int) -> int:
    """Worker count for ``n_tasks``, capped by ``PKTCOUNT_THREADS`` when set."""
    env = os.environ.get("PKTCOUNT_THREADS", "").strip()
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _run_chain(log_post, init, steps0, config: McmcConfig, chain: int, groups, local, sweep_factory=None):
    rng = make_rng(config.seed, "mcmc-chain", chain)
    theta = np.array(init, dtype=float)
    P = theta.size
    steps = np.array(steps0, dtype=float)
    log_steps = np.log(steps)
    draws = np.empty((config.kept, P))
    n_iter = config.iterations

    if groups is None:
        lp = float(log_post(theta))
        if not math.isfinite(lp):
            raise ValueError(f"log posterior is not finite at the initial point of chain {chain}")
        acc_batch = np.zeros(P)
        acc_kept = 0
        acc_burn = 0
        k_adapt = 0
        chunk = 512
        for start in range(0, n_iter, chunk):
            m = min(chunk, n_iter - start)
            Z = rng.standard_normal((m, P))
            LU = np.log(rng.random((m, P)))
            for j in range(m):
                it = start + j
                for i in range(P):
                    old = theta[i]
                    theta[i] = old + steps[i] * Z[j, i]
                    new_lp = log_post(theta)
                    if new_lp - lp > LU[j, i]:  # NaN compares False: rejected
                        lp = new_lp
                        if it < config.burn_in:
                            acc_batch[i] += 1
                            acc_burn += 1
                        else:
                            acc_kept += 1
                    else:
                        theta[i] = old
                if it < config.burn_in:
                    if (it + 1) % config.adapt_every == 0:
                        k_adapt += 1
                        rate = acc_batch / config.adapt_every
                        log_steps += (rate - config.adapt_target) * min(1.0, 4.0 / math.sqrt(k_adapt))
                        steps = np.exp(log_steps)
                        acc_batch[:] = 0
                else:
                    draws[it - config.burn_in] = theta
        if config.burn_in and acc_burn == 0:
            raise SamplerError(f"chain {chain} accepted no proposals during burn-in")
        rate = acc_kept / (config.kept * P)
        return draws, rate, steps

    # blocked path
    for g in range(len(groups)):
        cur = np.asarray(local(theta, g), float)
        if not np.all(np.isfinite(cur)):
            raise ValueError(f"log posterior is not finite at the initial point of chain {chain}")
    nb = [blk.shape[0] for blk in groups]
    acc_batch = [np.zeros(n) for n in nb]
    acc_kept = 0
    acc_burn = 0
    k_adapt = 0
    total_blocks = sum(nb)
    offs = np.cumsum([0] + nb)
    sweep = sweep_factory(theta) if sweep_factory is not None else None
    accepted = np.zeros(total_blocks, dtype=np.bool_)
    chunk = 256
    for start in range(0, n_iter, chunk):
        m = min(chunk, n_iter - start)
        Z = rng.standard_normal((m, P))
        LU = np.log(rng.random((m, total_blocks)))
        for j in range(m):
            it = start + j
            burn = it < config.burn_in
            if sweep is not None:
                sweep(theta, steps, Z[j], LU[j], accepted)
                n_acc = int(accepted.sum())
                if burn:
                    for g in range(len(groups)):
                        acc_batch[g] += accepted[offs[g]:offs[g + 1]]
                    acc_burn += n_acc
                else:
                    acc_kept += n_acc
            for g, blk in enumerate(groups if sweep is None else ()):
                cur = local(theta, g)
                prop = theta.copy()
                prop[blk] += steps[blk] * Z[j, blk]
                new = local(prop, g)
                acc = (new - cur) > LU[j, offs[g]:offs[g + 1]]
                if acc.any():
                    rows = blk[acc]
                    theta[rows] = prop[rows]
                    n_acc = int(acc.sum())
                    if burn:
                        acc_batch[g] += acc
                        acc_burn += n_acc
                    else:
                        acc_kept += n_acc
            if burn:
                if (it + 1) % config.adapt_every == 0:
                    k_adapt += 1
                    gain = min(1.0, 4.0 / math.sqrt(k_adapt))
                    for g, blk in enumerate(groups):
                        rate = acc_batch[g] / config.adapt_every
                        log_steps[blk] += ((rate - config.adapt_target) * gain)[:, None]
                        acc_batch[g][:] = 0
                    steps = np.exp(log_steps)
            else:
                draws[it - config.burn_in] = theta
    if config.burn_in and acc_burn == 0:
        raise SamplerError(f"chain {chain} accepted no proposals during burn-in")
    rate = acc_kept / (config.kept * total_blocks)
    return draws, rate, steps


def mcmc_sample(
    log_post: Callable[[np.ndarray], float],
    init,
    config: McmcConfig,
    *,
    param_names: Sequence[str] | None = None,
    groups: Sequence[np.ndarray] | None = None,
    local: Callable[[np.ndarray, int], np.ndarray] | None = None,
    step: np.ndarray | None = None,
    sweep_factory: Callable[[np.ndarray], Callable] | None = None,
) -> PosteriorSamples:
    """Draw ``config.chains`` independent chains targeting ``log_post``.

    ``init`` is either one starting vector shared by all chains or an array of
    shape ``(chains, params)``. ``step`` overrides ``config.init_step`` with a
    per-parameter vector.

    ``sweep_factory(theta0)`` may supply, per chain, a compiled replacement for
    one pass over ``groups``: ``sweep(theta, steps, z, log_u, accepted)``
    updates ``theta`` in place using the same normals ``z`` (one per
    parameter) and log-uniforms ``log_u`` (one per block, in group order) as
    the generic loop, and records each block's decision in ``accepted``.
    """
    init = np.asarray(init, dtype=float)
    if init.ndim == 1:
        init = np.tile(init, (config.chains, 1))
    if init.shape[0] != config.chains:
        raise ValueError("init must have one row per chain")
    P = init.shape[1]
    if (groups is None) != (local is None):
        raise ValueError("groups and local must be given together")
    if groups is not None:
        groups = [np.asarray(g, dtype=np.intp).reshape(len(g), -1) for g in groups]
        flat = np.concatenate([g.ravel() for g in groups])
        if np.unique(flat).size != flat.size:
            raise ValueError("groups must not share parameters")
    if sweep_factory is not None and groups is None:
        raise ValueError("sweep_factory requires groups")
    if step is None:
        step = np.broadcast_to(np.asarray(config.init_step, float), (P,)).copy()
    step = np.asarray(step, float)
    if step.shape != (P,) or np.any(step <= 0):
        raise ValueError("step must be a positive vector with one entry per parameter")
    names = list(param_names) if param_names is not None else [f"theta[{i}]" for i in range(P)]
    if len(names) != P:
        raise ValueError("param_names length does not match the parameter vector")

    def one(c):
        return _run_chain(log_post, init[c], step, config, c, groups, local, sweep_factory)

    workers = thread_count(config.chains)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, range(config.chains)))
    else:
        results = [one(c) for c in range(config.chains)]
    draws = np.stack([r[0] for r in results])
    rates = np.array([r[1] for r in results])
    steps = np.stack([r[2] for r in results])
    return PosteriorSamples(names, draws, rates, steps)
