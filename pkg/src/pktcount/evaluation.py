"""Localization error metrics and report tables."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .io import atomic_write_text, fmt, write_csv
from .localizer.estimate import TrajectoryEstimate
from .simulator import GroundTruth

COMPARE_HEADER = ["power_dbm", "freq_hz", "pcmcl_mean", "mcl_mean", "reduction_pct"]
TIMESERIES_HEADER = ["algorithm", "power_dbm", "freq_hz", "window", "t_center_s", "error_m", "transition", "flags"]


def per_window_error(est: TrajectoryEstimate, truth: GroundTruth) -> np.ndarray:
    """Distance from each estimate to the linearly interpolated truth at its window center."""
    if len(est) == 0:
        raise ValueError("estimate has no windows")
    t = np.asarray(est.t_center_s, float)
    t0, t1 = float(truth.t_s[0]), float(truth.t_s[-1])
    if t.max() < t0 or t.min() > t1:
        raise ValueError(f"estimate spans [{t.min():g}, {t.max():g}] s, truth spans [{t0:g}, {t1:g}] s: no overlap")
    if t.min() < t0 - 1e-9 or t.max() > t1 + 1e-9:
        raise ValueError("window centers fall outside the ground-truth time range")
    tx, ty = truth.position_at(t)
    return np.hypot(np.asarray(est.x_hat) - tx, np.asarray(est.y_hat) - ty)


def transition_flags(est: TrajectoryEstimate, truth: GroundTruth, delta_s: float) -> np.ndarray:
    """True for windows whose truth leaves the aisles or changes aisle.

    A window covers ``t_center +- delta_s / 2``; it is flagged if any truth
    sample in that span is in a corridor or the samples visit more than one
    aisle.
    """
    t = np.asarray(est.t_center_s, float)
    out = np.zeros(t.size, dtype=bool)
    for i, tc in enumerate(t):
        m = (truth.t_s >= tc - delta_s / 2) & (truth.t_s < tc + delta_s / 2)
        if not m.any():
            continue
        out[i] = bool(truth.corridor[m].any()) or np.unique(truth.aisle[m]).size > 1
    return out


def _nearest_rank(sorted_x: np.ndarray, q: float) -> float:
    k = max(1, math.ceil(q * sorted_x.size))
    return float(sorted_x[k - 1])


@dataclass
class ErrorReport:
    errors: np.ndarray
    transition: np.ndarray
    mean: float
    median: float
    p90: float
    within_aisle_mean: float
    transition_mean: float
    algorithm: str = ""
    freq_hz: float = math.nan
    power_dbm: float = math.nan
    window: np.ndarray | None = None
    t_center_s: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def config_key(self) -> tuple[float, float]:
        return (float(self.power_dbm), float(self.freq_hz))

    def to_dict(self) -> dict:
        def num(v):
            v = float(v)
            return None if math.isnan(v) else float(fmt(v))

        return {
            "algorithm": self.algorithm,
            "freq_hz": num(self.freq_hz),
            "power_dbm": num(self.power_dbm),
            "n_windows": int(self.errors.size),
            "mean": num(self.mean),
            "median": num(self.median),
            "p90": num(self.p90),
            "within_aisle_mean": num(self.within_aisle_mean),
            "transition_mean": num(self.transition_mean),
            "errors": [num(e) for e in self.errors],
            "transition": [bool(b) for b in self.transition],
        }


def summarize(errors, corridor_flags=None, *, algorithm: str = "", freq_hz: float = math.nan,
              power_dbm: float = math.nan, window=None, t_center_s=None, flags=None) -> ErrorReport:
    """Aggregate per-window errors; flagged windows feed ``transition_mean``.

    ``p90`` uses the nearest-rank definition. Means over an empty subset are NaN.
    """
    e = np.asarray(errors, float).ravel()
    if e.size == 0:
        raise ValueError("no errors to summarize")
    if np.any(~np.isfinite(e)) or np.any(e < 0):
        raise ValueError("errors must be finite and non-negative")
    tr = np.zeros(e.size, dtype=bool) if corridor_flags is None else np.asarray(corridor_flags, bool).ravel()
    if tr.size != e.size:
        raise ValueError("errors and corridor flags differ in length")
    srt = np.sort(e)
    n = e.size
    within = e[~tr]
    trans = e[tr]
    return ErrorReport(
        errors=e, transition=tr,
        mean=float(e.sum() / n),
        median=float(np.median(e)),
        p90=_nearest_rank(srt, 0.9),
        within_aisle_mean=float(within.sum() / within.size) if within.size else math.nan,
        transition_mean=float(trans.sum() / trans.size) if trans.size else math.nan,
        algorithm=algorithm, freq_hz=float(freq_hz), power_dbm=float(power_dbm),
        window=np.arange(n) if window is None else np.asarray(window, int),
        t_center_s=None if t_center_s is None else np.asarray(t_center_s, float),
        flags=[""] * n if flags is None else list(flags),
    )


def evaluate_estimate(est: TrajectoryEstimate, truth: GroundTruth, delta_s: float, *, algorithm: str,
                      freq_hz: float, power_dbm: float) -> ErrorReport:
    err = per_window_error(est, truth)
    return summarize(err, transition_flags(est, truth, delta_s), algorithm=algorithm, freq_hz=freq_hz,
                     power_dbm=power_dbm, window=est.window, t_center_s=est.t_center_s, flags=est.flags)


def reduction_pct(pcmcl_mean: float, mcl_mean: float) -> float:
    if not mcl_mean > 0:
        raise ValueError("baseline error must be positive")
    return (mcl_mean - pcmcl_mean) / mcl_mean * 100.0


def compare_report(runs) -> list[tuple]:
    """Rows ``(power_dbm, freq_hz, pcmcl_mean, mcl_mean, reduction_pct)``.

    ``runs`` holds ``(config, pcmcl_report, mcl_report)`` triples; ``config``
    is anything with ``freq_hz`` and ``power_dbm`` attributes or a
    ``(power_dbm, freq_hz)`` pair.
    """
    rows = []
    for cfg, pc, mc in runs:
        if hasattr(cfg, "power_dbm"):
            key = (float(cfg.power_dbm), float(cfg.freq_hz))
        else:
            key = (float(cfg[0]), float(cfg[1]))
        for rep in (pc, mc):
            if not all(math.isnan(a) or abs(a - b) < 1e-9 for a, b in zip(rep.config_key, key)):
                raise ValueError(f"report for {rep.config_key} paired with config {key}")
        if pc.algorithm and pc.algorithm != "pcmcl" or mc.algorithm and mc.algorithm != "mcl":
            raise ValueError("each config needs one pcmcl and one mcl report")
        rows.append((key[0], key[1], pc.mean, mc.mean, reduction_pct(pc.mean, mc.mean)))
    return rows


def write_compare(path, rows) -> None:
    write_csv(path, COMPARE_HEADER, rows)


def timeseries_rows(reports) -> list[tuple]:
    """One row per (algorithm, window), ordered by algorithm, config, then window."""
    rows = []
    for rep in reports:
        t = rep.t_center_s if rep.t_center_s is not None else np.full(rep.errors.size, math.nan)
        for i in range(rep.errors.size):
            rows.append((rep.algorithm, rep.power_dbm, rep.freq_hz, int(rep.window[i]), float(t[i]),
                         float(rep.errors[i]), int(rep.transition[i]), rep.flags[i]))
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    return rows


def timeseries_export(reports, path=None) -> list[tuple]:
    rows = timeseries_rows(reports)
    if path is not None:
        write_csv(path, TIMESERIES_HEADER, rows)
    return rows


def write_report_json(path, reports) -> None:
    atomic_write_text(path, json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
