"""Synthetic ground-truth walks and packet traces.

Walks follow a random-waypoint model with fixed destinations: straight legs
at a speed drawn per leg and a pause drawn at each stop. Traces are built
packet by packet: every beacon advertises at period ``1/f`` from a random
phase, and each packet is heard independently with the model probability for
the receiver's position at that instant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import InputError, atomic_write_text, parse_number, read_csv, write_csv
from .layout import LayoutSpec
from .model import EPS, RadioConfig, ReceptionModel
from .rng import make_rng
from .trace import PacketTrace

TRUTH_HEADER = ["t_s", "x_m", "y_m", "aisle", "corridor_flag"]


@dataclass(frozen=True)
class MovementScript:
    waypoints: tuple[tuple[float, float], ...]
    pause_s: tuple[float, float] = (8.0, 10.0)
    speed_mps: tuple[float, float] = (0.5, 1.5)
    dt_s: float = 0.1
    stops: tuple[bool, ...] | None = None  # None: every waypoint is a stop

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple((float(x), float(y)) for x, y in self.waypoints))
        if not self.waypoints:
            raise ValueError("script needs at least one waypoint")
        lo, hi = self.pause_s
        if not (0 <= lo <= hi):
            raise ValueError("pause range must satisfy 0 <= min <= max")
        lo, hi = self.speed_mps
        if not (0 < lo <= hi):
            raise ValueError("speed range must satisfy 0 < min <= max")
        if self.dt_s <= 0:
            raise ValueError("dt_s must be positive")
        if self.stops is not None and len(self.stops) != len(self.waypoints):
            raise ValueError("stops must have one flag per waypoint")

    def is_stop(self, i: int) -> bool:
        return True if self.stops is None else bool(self.stops[i])

    def to_json(self) -> dict:
        out = {
            "waypoints": [list(w) for w in self.waypoints],
            "pause_s": list(self.pause_s),
            "speed_mps": list(self.speed_mps),
            "dt_s": self.dt_s,
        }
        if self.stops is not None:
            out["stops"] = [bool(s) for s in self.stops]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MovementScript":
        stops = obj.get("stops")
        return cls(
            waypoints=tuple(tuple(w) for w in obj["waypoints"]),
            pause_s=tuple(obj.get("pause_s", (8.0, 10.0))),
            speed_mps=tuple(obj.get("speed_mps", (0.5, 1.5))),
            dt_s=float(obj.get("dt_s", 0.1)),
            stops=None if stops is None else tuple(bool(s) for s in stops),
        )

    @classmethod
    def load(cls, path) -> "MovementScript":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_json(), indent=2) + "\n")


@dataclass(frozen=True)
class GroundTruth:
    t_s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    aisle: np.ndarray
    corridor: np.ndarray

    def __len__(self) -> int:
        return int(self.t_s.size)

    @property
    def duration_s(self) -> float:
        return float(self.t_s[-1] - self.t_s[0])

    def position_at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Linear interpolation of the walk at times ``t``."""
        t = np.asarray(t, float)
        return np.interp(t, self.t_s, self.x), np.interp(t, self.t_s, self.y)

    def save(self, path) -> None:
        rows = zip(self.t_s.tolist(), self.x.tolist(), self.y.tolist(), self.aisle.tolist(), self.corridor.astype(int).tolist())
        write_csv(path, TRUTH_HEADER, rows)

    @classmethod
    def load(cls, path) -> "GroundTruth":
        rows = read_csv(path, TRUTH_HEADER)
        if not rows:
            raise InputError("ground truth has no rows", path, 2)
        cols = {k: [] for k in TRUTH_HEADER}
        for ln, rec in rows:
            for k in TRUTH_HEADER:
                kind = int if k in ("aisle", "corridor_flag") else float
                cols[k].append(parse_number(rec[k], kind, path, ln, k))
        t = np.array(cols["t_s"])
        if np.any(np.diff(t) <= 0):
            raise InputError("t_s must be strictly increasing", path)
        return cls(t, np.array(cols["x_m"]), np.array(cols["y_m"]),
                   np.array(cols["aisle"], dtype=int), np.array(cols["corridor_flag"], dtype=bool))

    @classmethod
    def stationary(cls, x: float, y: float, duration_s: float, layout: LayoutSpec, dt_s: float = 0.1) -> "GroundTruth":
        n = int(math.floor(duration_s / dt_s + 1e-9)) + 1
        t = np.arange(n) * dt_s
        xs, ys = np.full(n, float(x)), np.full(n, float(y))
        aisle, corr = layout.locate(xs, ys)
        return cls(t, xs, ys, aisle, corr)


def _check_script(script: MovementScript, layout: LayoutSpec) -> None:
    wp = np.array(script.waypoints)
    if not np.all(layout.in_bounds(wp[:, 0], wp[:, 1])):
        raise ValueError("waypoint outside the floor")
    inside = layout.in_stack(wp[:, 0], wp[:, 1])
    if inside.any():
        raise ValueError(f"waypoint {int(np.argmax(inside))} lies inside a stack")
    for i in range(len(wp) - 1):
        s = np.linspace(0, 1, 200)[:, None]
        seg = wp[i] + s * (wp[i + 1] - wp[i])
        if layout.in_stack(seg[:, 0], seg[:, 1]).any():
            raise ValueError(f"leg {i} -> {i + 1} cuts through a stack")


def gen_trajectory(script: MovementScript, layout: LayoutSpec, seed: int) -> GroundTruth:
    """Sample the scripted walk every ``dt_s`` seconds, starting at t = 0."""
    _check_script(script, layout)
    rng = make_rng(seed, "trajectory")
    knots_t = [0.0]
    knots_xy = [script.waypoints[0]]
    t = 0.0
    for i, wp in enumerate(script.waypoints):
        if i > 0:
            prev = script.waypoints[i - 1]
            dist = math.hypot(wp[0] - prev[0], wp[1] - prev[1])
            speed = rng.uniform(*script.speed_mps)
            t += dist / speed
            knots_t.append(t)
            knots_xy.append(wp)
        if script.is_stop(i):
            pause = rng.uniform(*script.pause_s)
            if pause > 0:
                t += pause
                knots_t.append(t)
                knots_xy.append(wp)
    n = int(math.floor(t / script.dt_s + 1e-9)) + 1
    ts = np.arange(n) * script.dt_s
    kt = np.array(knots_t)
    kxy = np.array(knots_xy)
    x = np.interp(ts, kt, kxy[:, 0])
    y = np.interp(ts, kt, kxy[:, 1])
    aisle, corr = layout.locate(x, y)
    return GroundTruth(ts, x, y, aisle, corr)


def binomial_draw(n: int, p: float, rng: np.random.Generator) -> int:
    """Number of successes in ``n`` explicit Bernoulli(p) trials."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if n < 0:
        raise ValueError("n must be non-negative")
    return int(np.count_nonzero(rng.random(int(n)) < p))


def _beacon_stream(k: int, bid: int, truth: GroundTruth, layout: LayoutSpec, table, stack_tab, config, seed):
    rng = make_rng(seed, "beacon", bid)
    period = 1.0 / config.freq_hz
    phase = rng.uniform(0.0, period)
    t_end = float(truth.t_s[-1])
    n = int(math.floor((t_end - phase) / period + 1e-12)) + 1 if phase <= t_end else 0
    t = phase + period * np.arange(n)
    x, y = truth.position_at(t)
    aisle, _ = layout.locate(x, y)
    s = stack_tab[aisle, k]
    bx, by = layout.beacons[k].x, layout.beacons[k].y
    d = np.hypot(x - bx, y - by)
    a, b, c = table[s, 0], table[s, 1], table[s, 2]
    p = np.clip(np.exp(a + b * d + c * d * d), EPS, 1.0 - EPS)
    heard = rng.random(n) < p
    return np.rint(t[heard] * 1000.0).astype(np.int64)


def simulate_trace(truth: GroundTruth, layout: LayoutSpec, model: ReceptionModel, config: RadioConfig, seed: int) -> PacketTrace:
    """Packet-level simulation of what a receiver following ``truth`` hears.

    Positions in a corridor use the nearest aisle's stack mapping.
    """
    if layout.max_stacks > model.max_stacks:
        raise ValueError(
            f"layout needs stack counts up to {layout.max_stacks}, model covers {model.max_stacks}"
        )
    table = model.radial_table(config.freq_hz, config.power_db)
    stack_tab = layout.stack_table()
    ids, times = [], []
    for k, bcn in enumerate(layout.beacons):
        tm = _beacon_stream(k, bcn.id, truth, layout, table, stack_tab, config, seed)
        times.append(tm)
        ids.append(np.full(tm.size, bcn.id, dtype=np.int64))
    t = np.concatenate(times) if times else np.empty(0, np.int64)
    b = np.concatenate(ids) if ids else np.empty(0, np.int64)
    order = np.lexsort((b, t))
    return PacketTrace(b[order], t[order])


def simulate_training(layout: LayoutSpec, model: ReceptionModel, configs, spots, duration_s: float, seed: int):
    """Stationary-receiver training data: one row per (config, spot, beacon).

    Each spot is listened to for ``duration_s`` with packet-level simulation;
    ``n_sent`` is the nominal ``round(f * duration_s)``.
    """
    from .inference.fit import TrainingDataset

    stack_tab = layout.stack_table()
    bxy = layout.beacon_xy
    rows = []
    for ci, cfg in enumerate(configs):
        n = int(round(cfg.freq_hz * duration_s))
        for si, (x, y) in enumerate(spots):
            truth = GroundTruth.stationary(x, y, duration_s - 1e-6, layout)
            tr = simulate_trace(truth, layout, model, cfg, seed=int(make_rng(seed, "train", ci, si).integers(2**63)))
            aisle = int(layout.locate([x], [y])[0][0])
            counts = dict(zip(*np.unique(tr.beacon_id, return_counts=True)))
            for k, bcn in enumerate(layout.beacons):
                c = min(int(counts.get(bcn.id, 0)), n)
                d = float(np.hypot(x - bxy[k, 0], y - bxy[k, 1]))
                rows.append((d, cfg.freq_hz, cfg.power_db, int(stack_tab[aisle, k]), c, n))
    arr = list(zip(*rows))
    return TrainingDataset(*(np.array(a) for a in arr))


def synthetic_dataset(coeffs, configs, distances, n_sent: int, stacks: int, seed: int):
    """Direct binomial rows on a (config x distance) grid for one stratum."""
    from .inference.fit import TrainingDataset

    rng = make_rng(seed, "synthetic-dataset", stacks)
    rows = []
    for cfg in configs:
        for d in distances:
            a, b, c = coeffs.radial(cfg.freq_hz, cfg.power_db)
            p = float(np.clip(math.exp(a + b * d + c * d * d), EPS, 1 - EPS))
            rows.append((float(d), cfg.freq_hz, cfg.power_db, stacks, binomial_draw(n_sent, p, rng), n_sent))
    arr = list(zip(*rows))
    return TrainingDataset(*(np.array(a) for a in arr))


def demo_script(layout: LayoutSpec | None = None, **kw) -> MovementScript:
    """Nine-stop walk: along aisle 0, through the far corridor, back along
    aisle 1, through the near corridor, then along aisle 2."""
    from .layout import demo_layout

    layout = layout or demo_layout()
    ys = [(a[1] + a[3]) / 2 for a in layout.aisles]
    xs = (2.5, 7.0, 11.5)
    far, near = 13.25, 0.75
    wp, stops = [], []

    def stop(x, y):
        wp.append((x, y)); stops.append(True)

    def via(x, y):
        wp.append((x, y)); stops.append(False)

    for x in xs:
        stop(x, ys[0])
    via(far, ys[0]); via(far, ys[1])
    for x in reversed(xs):
        stop(x, ys[1])
    via(near, ys[1]); via(near, ys[2])
    for x in xs:
        stop(x, ys[2])
    return MovementScript(tuple(wp), stops=tuple(stops), **kw)
