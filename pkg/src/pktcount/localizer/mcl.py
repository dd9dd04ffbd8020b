"""Range-free Monte Carlo localization baseline.

Any heard beacon is assumed to lie within a fixed radio range ``d0``.
Particles move uniformly within a disk of radius ``v_max * delta`` per window
and survive only if they sit in free space within ``d0`` of every beacon heard
in that window. Survivors are replenished by repeated prediction from the
previous set.
"""

from __future__ import annotations

import math

import numpy as np

from ..layout import LayoutSpec
from ..model import RadioConfig
from ..rng import make_rng
from ..trace import PacketTrace, window_counts
from .estimate import TrajectoryEstimate

MAX_STRICT_ROUNDS = 50
RELAX_FACTOR = 1.1


def _free(layout: LayoutSpec, x, y):
    return layout.in_bounds(x, y) & ~layout.in_stack(x, y)


def _filter_ok(x, y, heard_xy, d0):
    if heard_xy.shape[0] == 0:
        return np.ones(x.shape, dtype=bool)
    d2 = (x[:, None] - heard_xy[:, 0]) ** 2 + (y[:, None] - heard_xy[:, 1]) ** 2
    return np.all(d2 <= d0 * d0, axis=1)


def mcl_localize(trace: PacketTrace, layout: LayoutSpec, radio: RadioConfig, range_m: float,
                 n_particles: int = 1000, v_max: float = 2.0, seed: int = 0,
                 delta_s: float = 10.0) -> TrajectoryEstimate:
    if not range_m > 0:
        raise ValueError("radio range d0 must be positive")
    if n_particles < 1:
        raise ValueError("need at least one particle")
    trace.check_beacons(layout.beacon_ids)
    radio = RadioConfig(radio.freq_hz, radio.power_db, delta_s)
    windows = window_counts(trace, radio)
    if not windows:
        raise ValueError("trace spans no complete window")
    rng = make_rng(seed, "mcl")
    ids = layout.beacon_ids
    bxy = layout.beacon_xy
    reach = v_max * delta_s
    px = py = None
    out = {k: [] for k in ("x_hat", "y_hat", "x_lo", "x_hi", "y_lo", "y_hi")}
    flags = []
    for w in windows:
        heard = bxy[w.count_vector(ids) >= 1]
        keep_x, keep_y = [], []
        have = 0
        d0 = float(range_m)
        rounds = 0
        relaxed = False
        while have < n_particles:
            rounds += 1
            if rounds > MAX_STRICT_ROUNDS:
                d0 *= RELAX_FACTOR
                relaxed = True
            if px is None:
                cx = rng.uniform(0, layout.width_m, n_particles)
                cy = rng.uniform(0, layout.length_m, n_particles)
            else:
                parent = rng.integers(0, px.size, n_particles)
                rad = reach * np.sqrt(rng.random(n_particles))
                ang = rng.uniform(0, 2 * math.pi, n_particles)
                cx = px[parent] + rad * np.cos(ang)
                cy = py[parent] + rad * np.sin(ang)
            ok = _free(layout, cx, cy) & _filter_ok(cx, cy, heard, d0)
            keep_x.append(cx[ok])
            keep_y.append(cy[ok])
            have += int(ok.sum())
        px = np.concatenate(keep_x)[:n_particles]
        py = np.concatenate(keep_y)[:n_particles]
        out["x_hat"].append(px.mean())
        out["y_hat"].append(py.mean())
        lo, hi = np.percentile(px, [2.5, 97.5])
        out["x_lo"].append(lo)
        out["x_hi"].append(hi)
        lo, hi = np.percentile(py, [2.5, 97.5])
        out["y_lo"].append(lo)
        out["y_hi"].append(hi)
        f = []
        if heard.shape[0] == 0:
            f.append("no_beacons")
        if relaxed:
            f.append("relaxed")
        flags.append("|".join(f))
    return TrajectoryEstimate(
        window=np.arange(len(windows)),
        t_center_s=np.array([w.t_center_s for w in windows]),
        flags=flags,
        **{k: np.array(v) for k, v in out.items()},
    )
