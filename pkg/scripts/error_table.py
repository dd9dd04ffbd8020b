"""Average error of both localizers over the frequency x power grid.

Each seed is one demo walk; every radio setting localizes the same walk.
Rows are averaged over seeds and written as the comparison table.

    python3 scripts/error_table.py [--seeds 0 1 2 3 4] [--out error_table.csv]
"""

import argparse
import time
from collections import defaultdict

import numpy as np

from pktcount.evaluation import COMPARE_HEADER, reduction_pct, write_compare
from pktcount.experiments import grid_configs, run_walk


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--particles", type=int, default=1000)
    ap.add_argument("--out", default="error_table.csv")
    args = ap.parse_args()

    acc = defaultdict(lambda: ([], []))
    t0 = time.perf_counter()
    for seed in args.seeds:
        for radio in grid_configs():
            res = run_walk(radio, seed, particles=args.particles)
            pc, mc = acc[(radio.power_dbm, radio.freq_hz)]
            pc.append(res.pcmcl_report.mean)
            mc.append(res.mcl_report.mean)
            print(f"seed {seed}  {radio.power_dbm:g} dBm {radio.freq_hz:g} Hz  "
                  f"pcmcl {pc[-1]:.2f} m  mcl {mc[-1]:.2f} m")
    rows = []
    for (power, f), (pc, mc) in sorted(acc.items()):
        a, b = float(np.mean(pc)), float(np.mean(mc))
        rows.append((power, f, a, b, reduction_pct(a, b)))
    write_compare(args.out, rows)
    print("\n" + "  ".join(COMPARE_HEADER))
    for r in rows:
        print(f"{r[0]:g}  {r[1]:g}  {r[2]:.2f}  {r[3]:.2f}  {r[4]:.1f}%")
    print(f"\n{len(args.seeds) * len(rows)} runs in {time.perf_counter() - t0:.0f} s -> {args.out}")


if __name__ == "__main__":
    main()
