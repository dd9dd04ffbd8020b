"""Packet traces and their aggregation into fixed-width count windows."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .io import InputError, parse_number, read_csv, write_csv
from .model import RadioConfig

TRACE_HEADER = ["beacon_id", "t_ms"]


@dataclass(frozen=True)
class PacketTrace:
    """Received packets as parallel arrays ``(beacon_id, t_ms)``, time ordered."""

    beacon_id: np.ndarray
    t_ms: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beacon_id, dtype=np.int64).ravel()
        t = np.asarray(self.t_ms, dtype=np.int64).ravel()
        if b.shape != t.shape:
            raise ValueError("beacon_id and t_ms must have equal length")
        if t.size > 1 and np.any(np.diff(t) < 0):
            raise ValueError("trace timestamps must be non-decreasing")
        object.__setattr__(self, "beacon_id", b)
        object.__setattr__(self, "t_ms", t)

    def __len__(self) -> int:
        return int(self.t_ms.size)

    def check_beacons(self, known_ids) -> None:
        unknown = np.setdiff1d(np.unique(self.beacon_id), np.asarray(known_ids))
        if unknown.size:
            raise ValueError(f"trace references beacons not in layout: {unknown.tolist()[:10]}")

    def save(self, path) -> None:
        write_csv(path, TRACE_HEADER, zip(self.beacon_id.tolist(), self.t_ms.tolist()))

    @classmethod
    def load(cls, path) -> "PacketTrace":
        rows = read_csv(path, TRACE_HEADER)
        b = [parse_number(r["beacon_id"], int, path, ln, "beacon_id") for ln, r in rows]
        t = [parse_number(r["t_ms"], int, path, ln, "t_ms") for ln, r in rows]
        for i in range(1, len(t)):
            if t[i] < t[i - 1]:
                raise InputError("t_ms must be ascending", path, rows[i][0])
        return cls(np.array(b, dtype=np.int64), np.array(t, dtype=np.int64))


@dataclass(frozen=True)
class WindowedCounts:
    window_index: int
    t_start_ms: int
    duration_ms: int
    counts: dict[int, int]
    n_sent: int
    overflow: dict[int, int] = field(default_factory=dict)

    @property
    def t_center_s(self) -> float:
        return (self.t_start_ms + self.duration_ms / 2) / 1000.0

    @property
    def total_overflow(self) -> int:
        return sum(self.overflow.values())

    def count_vector(self, beacon_ids) -> np.ndarray:
        return np.array([self.counts.get(int(b), 0) for b in beacon_ids], dtype=np.int64)


def window_counts(trace: PacketTrace, config: RadioConfig, t_end_ms: int | None = None) -> list[WindowedCounts]:
    """Split ``trace`` into windows of ``config.window_s`` anchored at its first event.

    Counts above the nominal ``N = round(f * window)`` are clamped to ``N`` and
    the excess recorded in ``overflow``. The trailing window is kept only if it
    covers at least half a window; its ``N`` is then rescaled to its length.
    The trailing length runs to ``t_end_ms`` when given, otherwise to one
    advertising period past the last event.
    """
    if len(trace) == 0:
        return []
    width = int(round(config.window_s * 1000))
    t0 = int(trace.t_ms[0])
    idx = (trace.t_ms - t0) // width
    n_win = int(idx[-1]) + 1
    period_ms = 1000.0 / config.freq_hz
    end = t_end_ms if t_end_ms is not None else trace.t_ms[-1] + period_ms
    last_len = min(width, float(end) - (t0 + (n_win - 1) * width))
    n_full = config.n_sent

    out = []
    overflowed = False
    for w in range(n_win):
        if w == n_win - 1 and last_len < width:
            if last_len < width / 2:
                break
            dur = int(round(last_len))
            n = max(1, int(round(config.freq_hz * last_len / 1000.0)))
        else:
            dur, n = width, n_full
        sel = trace.beacon_id[idx == w]
        ids, cnt = np.unique(sel, return_counts=True)
        counts, over = {}, {}
        for b, c in zip(ids.tolist(), cnt.tolist()):
            if c > n:
                over[b] = c - n
                c = n
            counts[b] = c
        overflowed |= bool(over)
        out.append(WindowedCounts(w, t0 + w * width, dur, counts, n, over))
    if overflowed:
        warnings.warn("packet counts exceeded the nominal number sent and were clamped", stacklevel=2)
    return out
