"""Log-quadratic packet reception probability model.

The log of the probability that a single advertising packet is heard is a
quadratic polynomial in distance ``d`` (m), advertising frequency ``f`` (Hz)
and transmit power ``r`` (dB offset from -12 dBm). One coefficient set is
kept per number of stacks between receiver and beacon.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EPS = 1e-9
REFERENCE_DBM = -12.0

REDUCED_NAMES = ("b0", "b_f", "b_r", "b_d", "b_rd")
FULL_NAMES = REDUCED_NAMES + ("b_dd", "b_ff", "b_rr", "b_df", "b_fr")


def dbm_to_offset(power_dbm: float) -> float:
    return float(power_dbm) - REFERENCE_DBM


def offset_to_dbm(power_db: float) -> float:
    return float(power_db) + REFERENCE_DBM


@dataclass(frozen=True)
class RadioConfig:
    freq_hz: float
    power_db: float
    window_s: float = 10.0

    def __post_init__(self):
        if not (math.isfinite(self.freq_hz) and self.freq_hz > 0):
            raise ValueError(f"freq_hz must be positive, got {self.freq_hz}")
        if not (math.isfinite(self.window_s) and self.window_s > 0):
            raise ValueError(f"window_s must be positive, got {self.window_s}")
        if not math.isfinite(self.power_db):
            raise ValueError("power_db must be finite")
        if self.n_sent < 1:
            raise ValueError("freq_hz * window_s must round to at least one packet")

    @classmethod
    def from_dbm(cls, freq_hz: float, power_dbm: float, window_s: float = 10.0) -> "RadioConfig":
        return cls(freq_hz, dbm_to_offset(power_dbm), window_s)

    @property
    def power_dbm(self) -> float:
        return offset_to_dbm(self.power_db)

    @property
    def n_sent(self) -> int:
        """Nominal packets per beacon per window."""
        return int(round(self.freq_hz * self.window_s))


@dataclass(frozen=True)
class QuadraticCoefficients:
    """Coefficients of ``log p`` in (d, f, r).

    ``lin`` holds the (d, f, r) terms and ``quad`` the
    (d^2, f^2, r^2, d*f, d*r, f*r) terms.
    """

    b0: float = 0.0
    lin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    quad: tuple[float, float, float, float, float, float] = (0.0,) * 6

    def __post_init__(self):
        vals = (self.b0, *self.lin, *self.quad)
        if len(self.lin) != 3 or len(self.quad) != 6:
            raise ValueError("lin needs 3 entries and quad needs 6")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "lin", tuple(float(v) for v in self.lin))
        object.__setattr__(self, "quad", tuple(float(v) for v in self.quad))
        object.__setattr__(self, "b0", float(self.b0))

    @classmethod
    def from_reduced(cls, b0, b_f, b_r, b_d, b_rd) -> "QuadraticCoefficients":
        return cls(b0, (b_d, b_f, b_r), (0.0, 0.0, 0.0, 0.0, b_rd, 0.0))

    @classmethod
    def from_vector(cls, values, names=FULL_NAMES) -> "QuadraticCoefficients":
        named = dict.fromkeys(FULL_NAMES, 0.0)
        for n, v in zip(names, values):
            if n not in named:
                raise ValueError(f"unknown coefficient {n!r}")
            named[n] = float(v)
        return cls.from_dict(named)

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticCoefficients":
        g = lambda k: float(d.get(k, 0.0))
        return cls(
            g("b0"),
            (g("b_d"), g("b_f"), g("b_r")),
            (g("b_dd"), g("b_ff"), g("b_rr"), g("b_df"), g("b_rd"), g("b_fr")),
        )

    def to_dict(self) -> dict[str, float]:
        return dict(zip(FULL_NAMES, self.as_vector(reduced=False)))

    def as_vector(self, reduced: bool = True) -> np.ndarray:
        b_d, b_f, b_r = self.lin
        dd, ff, rr, df, dr, fr = self.quad
        v = [self.b0, b_f, b_r, b_d, dr]
        if not reduced:
            v += [dd, ff, rr, df, fr]
        return np.array(v, dtype=float)

    @property
    def is_reduced(self) -> bool:
        dd, ff, rr, df, _, fr = self.quad
        return dd == ff == rr == df == fr == 0.0

    def reduced(self) -> "QuadraticCoefficients":
        """Drop every quadratic term except d*r."""
        return QuadraticCoefficients(self.b0, self.lin, (0.0, 0.0, 0.0, 0.0, self.quad[4], 0.0))

    def radial(self, f: float, r: float) -> tuple[float, float, float]:
        """Collapse to ``log p = a + b*d + c*d^2`` for a fixed radio configuration."""
        b_d, b_f, b_r = self.lin
        dd, ff, rr, df, dr, fr = self.quad
        a = self.b0 + b_f * f + b_r * r + ff * f * f + rr * r * r + fr * f * r
        b = b_d + df * f + dr * r
        return a, b, dd


def design_row(d, f, r, reduced: bool = True) -> np.ndarray:
    """Feature vector(s) matching ``QuadraticCoefficients.as_vector`` order."""
    d, f, r = np.broadcast_arrays(np.asarray(d, float), np.asarray(f, float), np.asarray(r, float))
    cols = [np.ones_like(d), f, r, d, r * d]
    if not reduced:
        cols += [d * d, f * f, r * r, d * f, f * r]
    return np.stack(cols, axis=-1)


def log_reception_general(d, f, r, coeffs: QuadraticCoefficients):
    """Unclamped log reception probability. Accepts scalars or arrays."""
    d_arr = np.asarray(d, dtype=float)
    f_arr = np.asarray(f, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    for name, a in (("d", d_arr), ("f", f_arr), ("r", r_arr)):
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{name} must be finite")
    if np.any(d_arr < 0):
        raise ValueError("distance must be non-negative")
    b_d, b_f, b_r = coeffs.lin
    dd, ff, rr, df, dr, fr = coeffs.quad
    out = (
        coeffs.b0
        + b_d * d_arr + b_f * f_arr + b_r * r_arr
        + dd * d_arr * d_arr + ff * f_arr * f_arr + rr * r_arr * r_arr
        + df * d_arr * f_arr + dr * d_arr * r_arr + fr * f_arr * r_arr
    )
    return float(out) if out.ndim == 0 else out


def clamp_log_prob(logp):
    return np.clip(logp, math.log(EPS), math.log1p(-EPS))


@dataclass(frozen=True)
class ReceptionModel:
    """Coefficient sets indexed by stack count; an entry is ``None`` when its stratum had no data."""

    per_stacks: tuple[QuadraticCoefficients | None, ...]
    max_stacks: int = field(default=-1)

    def __post_init__(self):
        object.__setattr__(self, "per_stacks", tuple(self.per_stacks))
        if self.max_stacks < 0:
            object.__setattr__(self, "max_stacks", len(self.per_stacks) - 1)
        if len(self.per_stacks) != self.max_stacks + 1:
            raise ValueError(
                f"expected {self.max_stacks + 1} coefficient sets, got {len(self.per_stacks)}"
            )
        if all(c is None for c in self.per_stacks):
            raise ValueError("model has no coefficient sets")

    @property
    def missing(self) -> list[int]:
        return [s for s, c in enumerate(self.per_stacks) if c is None]

    def coeffs(self, stacks: int) -> QuadraticCoefficients:
        if stacks < 0:
            raise ValueError("stack count must be non-negative")
        s = min(int(stacks), self.max_stacks)
        c = self.per_stacks[s]
        if c is None:
            raise ValueError(f"model has no coefficients for stack count {s}")
        return c

    def radial_table(self, f: float, r: float) -> np.ndarray:
        """``(max_stacks+1, 3)`` array of (a, b, c) with ``log p = a + b d + c d^2``."""
        return np.array([self.coeffs(s).radial(f, r) for s in range(self.max_stacks + 1)])

    def to_json(self) -> dict:
        return {
            "max_stacks": self.max_stacks,
            "per_stacks": [None if c is None else c.to_dict() for c in self.per_stacks],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReceptionModel":
        per = [None if e is None else QuadraticCoefficients.from_dict(e) for e in obj["per_stacks"]]
        return cls(tuple(per), int(obj.get("max_stacks", len(per) - 1)))

    def save(self, path) -> None:
        from .io import atomic_write_text

        atomic_write_text(path, json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ReceptionModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def reception_prob(model: ReceptionModel, stacks: int, d, f, r):
    """Clamped reception probability in ``[EPS, 1 - EPS]``."""
    logp = log_reception_general(d, f, r, model.coeffs(stacks))
    p = np.clip(np.exp(logp), EPS, 1.0 - EPS)
    return float(p) if np.ndim(p) == 0 else p


def empirical_prob(c, f: float, delta: float, for_log: bool = False):
    """Fraction of nominally sent packets that were heard, ``c / (f * delta)``.

    Returns ``(p_bar, overflow)`` where ``overflow`` marks counts above the
    nominal number sent (those are clamped to 1). With ``for_log`` the value is
    also clamped to ``[EPS, 1 - EPS]`` so its log is finite.
    """
    if f * delta <= 0:
        raise ValueError("f * delta must be positive")
    c_arr = np.asarray(c, dtype=float)
    if np.any(c_arr < 0):
        raise ValueError("counts must be non-negative")
    p = c_arr / (f * delta)
    overflow = p > 1.0
    p = np.minimum(p, 1.0)
    if for_log:
        p = np.clip(p, EPS, 1.0 - EPS)
    if p.ndim == 0:
        return float(p), bool(overflow)
    return p, overflow


# Posterior means of the free-space, one-stack and two-stack fits
# (variable order: intercept, f, r, d, r*d).
REFERENCE_COEFFS = {
    0: (-0.101, -0.012, 0.056, -0.272, 0.189),
    1: (-0.236, -0.026, 0.303, -0.292, 0.018),
    2: (-0.305, -0.033, 0.604, -0.302, 0.017),
}


def reference_model() -> ReceptionModel:
    return ReceptionModel(tuple(QuadraticCoefficients.from_reduced(*REFERENCE_COEFFS[s]) for s in range(3)))
