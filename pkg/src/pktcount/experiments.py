"""Synthetic walk experiments over the frequency x power grid."""

from __future__ import annotations

import time

import numpy as np
from dataclasses import dataclass, field, replace

from .evaluation import ErrorReport, evaluate_estimate
from .layout import LayoutSpec, demo_layout
from .localizer import LocalizerConfig, TrajectoryEstimate, mcl_localize, pcmcl_localize
from .model import RadioConfig, ReceptionModel, reference_model
from .rng import derive_seed
from .simulator import GroundTruth, MovementScript, demo_script, gen_trajectory, simulate_trace
from .trace import PacketTrace

GRID_FREQS_HZ = (1.0, 2.0, 10.0)
GRID_POWERS_DBM = (-20.0, -15.0, -12.0)

# Baseline radio range per power setting, chosen to minimise the baseline's
# own error on a tuning seed (see scripts/tune_mcl_range.py).
DEFAULT_RANGE_M = {-20.0: 8.0, -15.0: 10.0, -12.0: 10.0}


def grid_configs(window_s: float = 10.0) -> list[RadioConfig]:
    return [RadioConfig.from_dbm(f, p, window_s) for p in GRID_POWERS_DBM for f in GRID_FREQS_HZ]


def radio_range_m(power_dbm: float) -> float:
    """Default baseline radio range for the nearest tabulated power."""
    key = min(DEFAULT_RANGE_M, key=lambda k: abs(k - power_dbm))
    return DEFAULT_RANGE_M[key]


@dataclass
class WalkResult:
    radio: RadioConfig
    seed: int
    truth: GroundTruth
    trace: PacketTrace
    pcmcl: TrajectoryEstimate
    mcl: TrajectoryEstimate
    pcmcl_report: ErrorReport
    mcl_report: ErrorReport
    seconds: dict = field(default_factory=dict)


def run_walk(radio: RadioConfig, seed: int, *, layout: LayoutSpec | None = None,
             truth_model: ReceptionModel | None = None, model: ReceptionModel | None = None,
             script: MovementScript | None = None, loc: LocalizerConfig | None = None,
             range_m: float | None = None, particles: int = 1000) -> WalkResult:
    """Simulate one walk, localize it with both algorithms and score both.

    ``truth_model`` generates the packets and ``model`` is what the localizer
    believes (defaults: both the reference coefficients). The walk depends
    only on ``seed``, so every radio setting sees the same trajectory.
    """
    layout = layout or demo_layout()
    truth_model = truth_model or reference_model()
    model = model or truth_model
    script = script or demo_script(layout)
    loc = loc or LocalizerConfig()
    radio = RadioConfig(radio.freq_hz, radio.power_db, loc.delta_s)
    d0 = radio_range_m(radio.power_dbm) if range_m is None else range_m
    tag = (round(radio.power_dbm * 10), round(radio.freq_hz * 10))
    loc = replace(loc, mcmc=replace(loc.mcmc, seed=derive_seed(seed, "pcmcl", *tag)))

    truth = gen_trajectory(script, layout, derive_seed(seed, "walk"))
    trace = simulate_trace(truth, layout, truth_model, radio, derive_seed(seed, "trace", *tag))
    t0 = time.perf_counter()
    pc = pcmcl_localize(trace, layout, model, loc, radio)
    t1 = time.perf_counter()
    mc = mcl_localize(trace, layout, radio, d0, n_particles=particles, v_max=loc.s_max,
                      seed=derive_seed(seed, "mcl", *tag), delta_s=loc.delta_s)
    t2 = time.perf_counter()
    kw = dict(freq_hz=radio.freq_hz, power_dbm=radio.power_dbm)
    return WalkResult(
        radio, seed, truth, trace, pc, mc,
        evaluate_estimate(pc, truth, loc.delta_s, algorithm="pcmcl", **kw),
        evaluate_estimate(mc, truth, loc.delta_s, algorithm="mcl", **kw),
        {"pcmcl": t1 - t0, "mcl": t2 - t1},
    )


def training_spots(layout: LayoutSpec, per_aisle: int = 5, margin_m: float = 0.5) -> list[tuple[float, float]]:
    """Evenly spaced listening spots along the center line of every aisle."""
    spots = []
    for x0, y0, x1, y1 in sorted(layout.aisles, key=lambda a: a[1]):
        for x in np.linspace(x0 + margin_m, x1 - margin_m, per_aisle):
            spots.append((float(x), (y0 + y1) / 2))
    return spots
