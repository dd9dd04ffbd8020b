"""Pick the baseline radio range per power setting.

For each power the range that minimises the baseline's own mean error,
averaged over the three frequencies on tuning seeds kept apart from the
evaluation seeds, is reported.

    python3 scripts/tune_mcl_range.py [--seeds 1000 1001]
"""

import argparse

import numpy as np

from pktcount.evaluation import evaluate_estimate
from pktcount.experiments import GRID_FREQS_HZ, GRID_POWERS_DBM
from pktcount.layout import demo_layout
from pktcount.localizer import mcl_localize
from pktcount.model import RadioConfig, reference_model
from pktcount.rng import derive_seed
from pktcount.simulator import demo_script, gen_trajectory, simulate_trace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1000, 1001])
    ap.add_argument("--ranges", type=float, nargs="+", default=[2, 3, 4, 5, 6, 8, 10, 11, 12, 14, 16, 20])
    args = ap.parse_args()
    layout, model = demo_layout(), reference_model()
    for power in GRID_POWERS_DBM:
        table = np.zeros(len(args.ranges))
        for seed in args.seeds:
            truth = gen_trajectory(demo_script(layout), layout, derive_seed(seed, "walk"))
            for f in GRID_FREQS_HZ:
                radio = RadioConfig.from_dbm(f, power)
                tr = simulate_trace(truth, layout, model, radio, derive_seed(seed, "tune-trace", int(power), int(f)))
                for j, d0 in enumerate(args.ranges):
                    est = mcl_localize(tr, layout, radio, d0, seed=derive_seed(seed, "tune-mcl"))
                    table[j] += evaluate_estimate(est, truth, 10.0, algorithm="mcl", freq_hz=f, power_dbm=power).mean
        table /= len(args.seeds) * len(GRID_FREQS_HZ)
        best = args.ranges[int(np.argmin(table))]
        cells = "  ".join(f"{d0:g}:{e:.2f}" for d0, e in zip(args.ranges, table))
        print(f"{power:g} dBm  best d0 = {best:g} m   {cells}")


if __name__ == "__main__":
    main()
