"""Packet-count Monte-Carlo localization (PC-MCL).

The whole walk is estimated at once. Latent state: one position per window,
one speed per consecutive pair of windows, and either two aisle thresholds
along y (three-aisle layouts) or a per-(window, beacon) distribution over
stack counts (any layout). Counts are binomial with the reception model's
probability at the window position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from ..inference.mcmc import McmcConfig, PosteriorSamples, mcmc_sample
from ..layout import LayoutSpec
from ..model import EPS, RadioConfig, ReceptionModel
from ..rng import make_rng
from ..trace import PacketTrace, WindowedCounts, window_counts
from . import _kernels
from .estimate import TrajectoryEstimate

SIGMA_FLOOR_M = 0.05
_LOG_LO = math.log(EPS)
_LOG_HI = math.log1p(-EPS)
_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class LocalizerConfig:
    delta_s: float = 10.0
    s_max: float = 2.0
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    stack_mode: str = "thresholds"
    dirichlet_alpha: float = 1.0
    pilot_iters: int = 2000  # short multi-start run whose best state seeds the chains; 0 disables

    def __post_init__(self):
        if not self.s_max > 0:
            raise ValueError("s_max must be positive")
        if not self.delta_s > 0:
            raise ValueError("delta_s must be positive")
        if self.stack_mode not in ("thresholds", "dirichlet"):
            raise ValueError(f"unknown stack_mode {self.stack_mode!r}")
        if not self.dirichlet_alpha > 0:
            raise ValueError("dirichlet_alpha must be positive")
        if self.pilot_iters < 0:
            raise ValueError("pilot_iters must be >= 0")


@dataclass
class PcmclParams:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    tau1: float = 0.0
    tau2: float = 0.0
    q: np.ndarray | None = None  # (windows, beacons, stack counts), dirichlet mode only


def aisle_index(y, tau1: float, tau2: float):
    """0 below ``tau1``, 1 on ``[tau1, tau2]``, 2 above ``tau2``."""
    if tau1 > tau2:
        raise ValueError("tau1 must not exceed tau2")
    y = np.asarray(y, float)
    a = (y >= tau1).astype(int) + (y > tau2).astype(int)
    return int(a) if a.ndim == 0 else a


def dirichlet_stack_logprior(q, alpha: float) -> float:
    """Sum of symmetric Dirichlet(alpha) log densities over rows of ``q``."""
    q = np.asarray(q, float)
    q = q.reshape(-1, q.shape[-1])
    if np.any(q < 0) or np.any(np.abs(q.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("every row of q must lie on the probability simplex")
    k = q.shape[1]
    norm = gammaln(k * alpha) - k * gammaln(alpha)
    if alpha == 1.0:
        return float(q.shape[0] * norm)
    with np.errstate(divide="ignore"):
        return float(q.shape[0] * norm + (alpha - 1.0) * np.log(q).sum())


def stack_draw(q, rng: np.random.Generator):
    """Categorical draw of a stack count from each simplex row of ``q``."""
    q = np.asarray(q, float)
    flat = q.reshape(-1, q.shape[-1])
    if np.any(flat < 0) or np.any(np.abs(flat.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("every row of q must lie on the probability simplex")
    cdf = np.cumsum(flat, axis=1)
    u = rng.random((flat.shape[0], 1))
    s = np.minimum((u >= cdf).sum(axis=1), flat.shape[1] - 1)
    return int(s[0]) if q.ndim == 1 else s.reshape(q.shape[:-1])


class PcmclPosterior:
    """Log posterior over the flattened parameter vector, with block structure.

    Vector layout: ``x[0:N], y[0:N], s[0:N-1]`` followed by ``tau1, tau2 - tau1``
    (thresholds mode) or ``q[..., :-1]`` per (window, beacon) (dirichlet mode).
    """

    def __init__(self, windows: list[WindowedCounts], layout: LayoutSpec, model: ReceptionModel,
                 config: LocalizerConfig, radio: RadioConfig):
        if not windows:
            raise ValueError("need at least one window")
        if config.stack_mode == "thresholds" and layout.num_aisles != 3:
            raise ValueError(
                f"thresholds mode supports exactly 3 aisles (layout has {layout.num_aisles}); "
                "use stack_mode='dirichlet'"
            )
        if layout.max_stacks > model.max_stacks:
            raise ValueError("model does not cover the layout's stack counts")
        self.layout, self.model, self.config, self.radio = layout, model, config, radio
        self.mode = config.stack_mode
        ids = layout.beacon_ids
        self.C = np.stack([w.count_vector(ids) for w in windows]).astype(float)
        self.Nw = np.array([w.n_sent for w in windows], dtype=float)
        self.C = np.minimum(self.C, self.Nw[:, None])
        self.NC = self.Nw[:, None] - self.C
        self.lconst = gammaln(self.Nw[:, None] + 1) - gammaln(self.C + 1) - gammaln(self.NC + 1)
        self.const_w = self.lconst.sum(axis=1)
        self.bx, self.by = (np.ascontiguousarray(layout.beacon_xy[:, j]) for j in range(2))
        tab = model.radial_table(radio.freq_hz, radio.power_db)
        self.ta, self.tb, self.tc = (np.ascontiguousarray(tab[:, j]) for j in range(3))
        self.quad = bool(np.any(self.tc != 0))
        self.stack_tab = np.ascontiguousarray(layout.stack_table(), dtype=np.int64)
        self.W, self.L = layout.width_m, layout.length_m
        self.n = N = len(windows)
        self.K = K = ids.size
        self.S = model.max_stacks + 1
        self.ix, self.iy = np.arange(N), np.arange(N, 2 * N)
        self.i_s = np.arange(2 * N, 3 * N - 1)
        base = 3 * N - 1
        if self.mode == "thresholds":
            self.i_tau = np.array([base, base + 1])
            self.size = base + 2
        else:
            nq = self.S - 1
            self.i_q = base + np.arange(N * K * nq).reshape(N, K, nq)
            self.size = base + N * K * nq
        log_tau = math.log(2.0 / self.L**2) if self.mode == "thresholds" else 0.0
        self.prior_const = -math.log(self.W) - math.log(self.L) - (N - 1) * math.log(config.s_max) + log_tau
        if self.mode == "dirichlet":
            self.prior_const += N * K * float(gammaln(self.S * config.dirichlet_alpha) - self.S * gammaln(config.dirichlet_alpha))
        self.groups = self._groups()
        if self.mode == "thresholds":
            self.tau_ref = tuple(float(t) for t in layout.aisle_boundaries())

    # -- vector <-> params ----------------------------------------------------

    def pack(self, p: PcmclParams) -> np.ndarray:
        v = np.empty(self.size)
        v[self.ix], v[self.iy] = p.x, p.y
        v[self.i_s] = p.s
        if self.mode == "thresholds":
            v[self.i_tau] = (p.tau1, p.tau2 - p.tau1)
        else:
            v[self.i_q] = np.asarray(p.q)[..., :-1]
        return v

    def unpack(self, v: np.ndarray) -> PcmclParams:
        v = np.asarray(v, float)
        p = PcmclParams(v[self.ix].copy(), v[self.iy].copy(), v[self.i_s].copy())
        if self.mode == "thresholds":
            p.tau1 = float(v[self.i_tau[0]])
            p.tau2 = float(v[self.i_tau[0]] + v[self.i_tau[1]])
        else:
            qf = v[self.i_q]
            p.q = np.concatenate([qf, 1.0 - qf.sum(axis=-1, keepdims=True)], axis=-1)
        return p

    # -- density pieces -------------------------------------------------------

    def _logp(self, rows, x, y, S):
        d2 = (x[:, None] - self.bx) ** 2 + (y[:, None] - self.by) ** 2
        d = np.sqrt(d2)
        lp = self.ta[S] + self.tb[S] * d
        if self.quad:
            lp = lp + self.tc[S] * d2
        return lp

    def _binom(self, rows, lp):
        lp = np.clip(lp, _LOG_LO, _LOG_HI)
        return self.C[rows] * lp + self.NC[rows] * np.log1p(-np.exp(lp))

    def obs_thresholds(self, rows, x, y, tau1, tau2):
        """Per-window observation log-likelihood for the windows in ``rows``."""
        aisle = (y >= tau1).astype(np.intp) + (y > tau2)
        S = self.stack_tab[aisle]
        ll = self._binom(rows, self._logp(rows, x, y, S))
        return ll.sum(axis=1) + self.const_w[rows]

    def obs_mixture_cells(self, rows, x, y, q):
        """Per-(window, beacon) log-likelihood with the stack count summed out under ``q``."""
        d2 = (x[:, None] - self.bx) ** 2 + (y[:, None] - self.by) ** 2
        d = np.sqrt(d2)
        terms = []
        for s in range(self.S):
            lp = self.ta[s] + self.tb[s] * d + (self.tc[s] * d2 if self.quad else 0.0)
            terms.append(self._binom(rows, lp))
        with np.errstate(divide="ignore"):
            logq = np.log(np.clip(q, 0.0, None))
        return logsumexp(np.stack(terms, axis=-1) + logq, axis=-1) + self.lconst[rows]

    def _q_full(self, v, rows=slice(None)):
        qf = v[self.i_q[rows]]
        return np.concatenate([qf, 1.0 - qf.sum(axis=-1, keepdims=True)], axis=-1)

    def _obs(self, v, rows):
        x, y = v[self.ix[rows]], v[self.iy[rows]]
        if self.mode == "thresholds":
            t1 = v[self.i_tau[0]]
            return self.obs_thresholds(rows, x, y, t1, t1 + v[self.i_tau[1]])
        return self.obs_mixture_cells(rows, x, y, self._q_full(v, rows)).sum(axis=1)

    def _increments(self, v):
        """Log density of each step ``i -> i+1`` (length N-1)."""
        x, y, s = v[self.ix], v[self.iy], v[self.i_s]
        sig = np.maximum(s * self.config.delta_s, SIGMA_FLOOR_M)
        dx, dy = np.diff(x), np.diff(y)
        return -2.0 * np.log(sig) - _LOG_2PI - (dx * dx + dy * dy) / (2.0 * sig * sig)

    def _pos_ok(self, x, y):
        return (x >= 0) & (x <= self.W) & (y >= 0) & (y <= self.L)

    def support_ok(self, v) -> bool:
        x, y, s = v[self.ix], v[self.iy], v[self.i_s]
        if not (np.all(self._pos_ok(x, y)) and np.all((s >= 0) & (s <= self.config.s_max))):
            return False
        if self.mode == "thresholds":
            t1, dt = v[self.i_tau]
            return bool(t1 >= 0 and dt >= 0 and t1 + dt <= self.L)
        qf = v[self.i_q]
        return bool(np.all(qf >= 0) and np.all(qf.sum(axis=-1) <= 1.0))

    def __call__(self, v) -> float:
        v = np.asarray(v, float)
        if not np.all(np.isfinite(v)):
            raise ValueError("parameter vector must be finite")
        if not self.support_ok(v):
            return -math.inf
        total = self.prior_const + self._obs(v, slice(None)).sum() + self._increments(v).sum()
        if self.mode == "dirichlet" and self.config.dirichlet_alpha != 1.0:
            total += (self.config.dirichlet_alpha - 1.0) * np.log(self._q_full(v)).sum()
        return float(total)

    # -- block structure for the sampler -------------------------------------

    def _groups(self):
        N = self.n
        groups = []
        self._kinds = []
        for parity in (0, 1):
            rows = np.arange(parity, N, 2)
            if rows.size:
                groups.append(np.stack([self.ix[rows], self.iy[rows]], axis=1))
                self._kinds.append(("pos", rows))
        if N > 1:
            groups.append(self.i_s[:, None])
            self._kinds.append(("speed", None))
        if self.mode == "thresholds":
            groups.append(self.i_tau[None, :])
            self._kinds.append(("tau", None))
        else:
            groups.append(self.i_q.reshape(N * self.K, -1))
            self._kinds.append(("q", None))
        return groups

    def sweep_factory(self, theta0):
        """Compiled sweep equivalent to the generic blocked updates (thresholds mode)."""
        if self.mode != "thresholds":
            return None
        cache = _kernels.init_obs_cache(np.asarray(theta0, float), self.n, *self._kargs())
        cfg = self.config
        r1, r2 = self.tau_ref
        args = (cache, self.n, self.W, self.L, cfg.s_max, cfg.delta_s, SIGMA_FLOOR_M, r1, r2) + self._kargs()

        def sweep(theta, steps, z, log_u, accepted):
            _kernels.sweep(theta, steps, z, log_u, accepted, *args)

        return sweep

    def _kargs(self):
        return (self.bx, self.by, self.ta, self.tb, self.tc, self.stack_tab, self.C, self.NC, self.const_w)

    def local(self, v, g):
        kind, rows = self._kinds[g]
        N = self.n
        if self.mode == "thresholds":
            cfg = self.config
            t1 = v[self.i_tau[0]]
            t2 = t1 + v[self.i_tau[1]]
            if kind == "pos":
                return _kernels.pos_local(v, rows, N, t1, t2, self.W, self.L, cfg.s_max, cfg.delta_s,
                                          SIGMA_FLOOR_M, *self._kargs())
            if kind == "speed":
                return _kernels.speed_local(v, N, cfg.s_max, cfg.delta_s, SIGMA_FLOOR_M)
            if not (t1 >= 0 and v[self.i_tau[1]] >= 0 and t2 <= self.L):
                return np.array([-np.inf])
            r1, r2 = self.tau_ref
            return np.array([_kernels.tau_local(v, N, t1, t2, r1, r2, *self._kargs())])
        if kind == "pos":
            x, y = v[self.ix[rows]], v[self.iy[rows]]
            ok = self._pos_ok(x, y)
            out = self._obs(v, rows)
            if N > 1:
                inc = self._increments(v)
                before = np.where(rows >= 1, inc[np.maximum(rows - 1, 0)], 0.0)
                after = np.where(rows <= N - 2, inc[np.minimum(rows, N - 2)], 0.0)
                out = out + before + after
            return np.where(ok, out, -np.inf)
        if kind == "speed":
            s = v[self.i_s]
            ok = (s >= 0) & (s <= self.config.s_max)
            return np.where(ok, self._increments(v), -np.inf)
        if kind == "tau":
            t1, dt = v[self.i_tau]
            if not (t1 >= 0 and dt >= 0 and t1 + dt <= self.L):
                return np.array([-np.inf])
            return np.array([self._obs(v, slice(None)).sum()])
        # q blocks, one per (window, beacon)
        qf = v[self.i_q]
        ok = (np.all(qf >= 0, axis=-1) & (qf.sum(axis=-1) <= 1.0)).ravel()
        q = self._q_full(v)
        x, y = v[self.ix], v[self.iy]
        cells = self.obs_mixture_cells(slice(None), x, y, q)
        if self.config.dirichlet_alpha != 1.0:
            with np.errstate(divide="ignore"):
                cells = cells + (self.config.dirichlet_alpha - 1.0) * np.log(np.clip(q, 0, None)).sum(axis=-1)
        return np.where(ok, cells.ravel(), -np.inf)

    # -- initialization -------------------------------------------------------

    def grid_init(self, step: float = 0.2) -> PcmclParams:
        """Per-window grid maximizer of the observation likelihood."""
        gx = np.arange(step / 2, self.W, step)
        gy = np.arange(step / 2, self.L, step)
        GX, GY = np.meshgrid(gx, gy, indexing="ij")
        GX, GY = GX.ravel(), GY.ravel()
        if self.mode == "thresholds":
            t1, t2 = self.layout.aisle_boundaries()
            aisle = (GY >= t1).astype(np.intp) + (GY > t2)
            S = self.stack_tab[aisle]
        d2 = (GX[:, None] - self.bx) ** 2 + (GY[:, None] - self.by) ** 2
        d = np.sqrt(d2)
        xs, ys = np.empty(self.n), np.empty(self.n)
        for i in range(self.n):
            rows = np.full(GX.size, i)
            if self.mode == "thresholds":
                lp = self.ta[S] + self.tb[S] * d + (self.tc[S] * d2 if self.quad else 0.0)
                score = self._binom(rows, lp).sum(axis=1)
            else:
                cells = [self._binom(rows, self.ta[s] + self.tb[s] * d + (self.tc[s] * d2 if self.quad else 0.0))
                         for s in range(self.S)]
                score = logsumexp(np.stack(cells, -1), axis=-1).sum(axis=1)
            j = int(np.argmax(score))
            xs[i], ys[i] = GX[j], GY[j]
        steps = np.hypot(np.diff(xs), np.diff(ys)) / self.config.delta_s
        s = np.clip(steps, 0.02, 0.98 * self.config.s_max)
        p = PcmclParams(xs, ys, s)
        if self.mode == "thresholds":
            p.tau1, p.tau2 = (float(t) for t in self.layout.aisle_boundaries())
        else:
            p.q = np.full((self.n, self.K, self.S), 1.0 / self.S)
        return p

    def chain_starts(self, base: PcmclParams, chains: int, seed: int) -> np.ndarray:
        v0 = self.pack(base)
        out = []
        for c in range(chains):
            rng = make_rng(seed, "pcmcl-init", c)
            v = v0.copy()
            v[self.ix] = np.clip(v[self.ix] + 0.3 * rng.standard_normal(self.n), 1e-6, self.W - 1e-6)
            v[self.iy] = np.clip(v[self.iy] + 0.05 * rng.standard_normal(self.n), 1e-6, self.L - 1e-6)
            v[self.i_s] = np.clip(v[self.i_s] * np.exp(0.3 * rng.standard_normal(self.n - 1)), 1e-3, 0.99 * self.config.s_max)
            if self.mode == "thresholds":
                v[self.i_tau[0]] += 0.05 * rng.standard_normal()
                v[self.i_tau[1]] = max(v[self.i_tau[1]] + 0.05 * rng.standard_normal(), 0.0)
            else:
                q = rng.dirichlet(np.full(self.S, 20.0), size=(self.n, self.K))
                v[self.i_q] = q[..., :-1]
            out.append(v)
        return np.stack(out)

    def param_names(self) -> list[str]:
        names = [f"x[{i}]" for i in range(self.n)] + [f"y[{i}]" for i in range(self.n)]
        names += [f"s[{i}]" for i in range(self.n - 1)]
        if self.mode == "thresholds":
            names += ["tau1", "tau_gap"]
        else:
            names += [f"q[{i},{k},{s}]" for i in range(self.n) for k in range(self.K) for s in range(self.S - 1)]
        return names


def pcmcl_log_posterior(theta: PcmclParams, windows, layout, model, config: LocalizerConfig, radio: RadioConfig) -> float:
    post = PcmclPosterior(windows, layout, model, config, radio)
    if config.stack_mode == "thresholds" and theta.tau1 > theta.tau2:
        return -math.inf
    return post(post.pack(theta))


def _pilot_best(post: PcmclPosterior, base: PcmclParams, config: LocalizerConfig, sweep_factory) -> PcmclParams:
    """Highest-density state visited by a short multi-start run.

    Chains that share a start can still settle into different threshold
    placements during burn-in; seeding every chain from the best pilot state
    keeps them out of the weaker ones. Only the starting point is affected.
    """
    mc = config.mcmc
    n_iter = config.pilot_iters
    pilot = McmcConfig(chains=mc.chains, iterations=n_iter, burn_in=n_iter // 2,
                       init_step=mc.init_step, adapt_target=mc.adapt_target,
                       seed=int(make_rng(mc.seed, "pcmcl-pilot").integers(2**62)), adapt_every=mc.adapt_every)
    init = post.chain_starts(base, pilot.chains, pilot.seed)
    res = mcmc_sample(post, init, pilot, groups=post.groups, local=post.local, sweep_factory=sweep_factory)
    cand = res.draws[:, ::max(1, pilot.kept // 50)].reshape(-1, res.draws.shape[-1])
    lps = np.array([post(v) for v in cand])
    return post.unpack(cand[int(np.argmax(lps))])


def pcmcl_localize(trace: PacketTrace, layout: LayoutSpec, model: ReceptionModel, config: LocalizerConfig,
                   radio: RadioConfig, keep_samples: bool = False, compiled: bool = True) -> TrajectoryEstimate:
    """Posterior-mean trajectory with 95% credible intervals, one entry per window."""
    radio = RadioConfig(radio.freq_hz, radio.power_db, config.delta_s)
    trace.check_beacons(layout.beacon_ids)
    windows = window_counts(trace, radio)
    if not windows:
        raise ValueError("trace spans no complete window")
    return localize_windows(windows, layout, model, config, radio, keep_samples, compiled)


def localize_windows(windows: list[WindowedCounts], layout: LayoutSpec, model: ReceptionModel,
                     config: LocalizerConfig, radio: RadioConfig, keep_samples: bool = False,
                     compiled: bool = True) -> TrajectoryEstimate:
    """As :func:`pcmcl_localize`, starting from already windowed counts."""
    radio = RadioConfig(radio.freq_hz, radio.power_db, config.delta_s)
    post = PcmclPosterior(windows, layout, model, config, radio)
    sweep_factory = post.sweep_factory if compiled else None
    base = post.grid_init()
    if config.pilot_iters > 0:
        base = _pilot_best(post, base, config, sweep_factory)
    init = post.chain_starts(base, config.mcmc.chains, config.mcmc.seed)
    samples = mcmc_sample(post, init, config.mcmc, param_names=post.param_names(),
                          groups=post.groups, local=post.local, sweep_factory=sweep_factory)
    flat = samples.flat()
    xs, ys = flat[:, post.ix], flat[:, post.iy]
    flags = [[] for _ in windows]
    if not np.any(post.C):
        for f in flags:
            f.append("uninformative")
    for i, w in enumerate(windows):
        if w.overflow:
            flags[i].append("overflow")
    return TrajectoryEstimate(
        window=np.arange(len(windows)),
        t_center_s=np.array([w.t_center_s for w in windows]),
        x_hat=xs.mean(axis=0), y_hat=ys.mean(axis=0),
        x_lo=np.percentile(xs, 2.5, axis=0), x_hi=np.percentile(xs, 97.5, axis=0),
        y_lo=np.percentile(ys, 2.5, axis=0), y_hi=np.percentile(ys, 97.5, axis=0),
        flags=["|".join(f) for f in flags],
        samples=samples if keep_samples else None,
    )
