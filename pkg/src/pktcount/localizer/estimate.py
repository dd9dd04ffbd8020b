from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..io import InputError, parse_number, read_csv, write_csv

ESTIMATE_HEADER = ["window", "t_center_s", "x_hat", "y_hat", "x_lo", "x_hi", "y_lo", "y_hi", "flags"]


@dataclass
class TrajectoryEstimate:
    """Per-window position estimates with 95% intervals.

    ``flags`` holds one ``|``-separated string per window (empty when clean).
    """

    window: np.ndarray
    t_center_s: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    flags: list[str]
    samples: object = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.window.size)

    def rows(self):
        for i in range(len(self)):
            yield (
                int(self.window[i]), float(self.t_center_s[i]), float(self.x_hat[i]), float(self.y_hat[i]),
                float(self.x_lo[i]), float(self.x_hi[i]), float(self.y_lo[i]), float(self.y_hi[i]), self.flags[i],
            )

    def save(self, path) -> None:
        write_csv(path, ESTIMATE_HEADER, self.rows())

    @classmethod
    def load(cls, path) -> "TrajectoryEstimate":
        recs = read_csv(path, ESTIMATE_HEADER)
        if not recs:
            raise InputError("estimate has no rows", path, 2)
        cols = {k: [] for k in ESTIMATE_HEADER}
        for ln, r in recs:
            for k in ESTIMATE_HEADER:
                if k == "flags":
                    cols[k].append(r[k])
                else:
                    cols[k].append(parse_number(r[k], int if k == "window" else float, path, ln, k))
        arr = {k: np.array(v) for k, v in cols.items() if k != "flags"}
        return cls(flags=cols["flags"], **arr)
