"""Per-window error of both localizers along one walk, for plotting.

    python3 scripts/error_timeseries.py [--power-dbm -15] [--freq-hz 10] [--seed 0]
"""

import argparse

from pktcount.evaluation import timeseries_export
from pktcount.experiments import run_walk
from pktcount.model import RadioConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--power-dbm", type=float, default=-15.0)
    ap.add_argument("--freq-hz", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="error_timeseries.csv")
    args = ap.parse_args()

    res = run_walk(RadioConfig.from_dbm(args.freq_hz, args.power_dbm), args.seed)
    rows = timeseries_export([res.pcmcl_report, res.mcl_report], args.out)
    for alg, rep in (("pcmcl", res.pcmcl_report), ("mcl", res.mcl_report)):
        print(f"{alg:5s} mean {rep.mean:.2f} m  within-aisle {rep.within_aisle_mean:.2f} m  "
              f"transition {rep.transition_mean:.2f} m")
    print(f"{len(rows)} rows -> {args.out}")


if __name__ == "__main__":
    main()
