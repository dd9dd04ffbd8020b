"""Store layout: rectangular floor, stacks, beacons and the aisle-to-stack mapping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

Rect = tuple[float, float, float, float]


@dataclass(frozen=True)
class Beacon:
    id: int
    x: float
    y: float
    group: int


def _in_rect(x, y, rect: Rect):
    x0, y0, x1, y1 = rect
    return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)


def derive_aisles(stacks, width_m: float, length_m: float) -> tuple[Rect, ...]:
    """Aisles are the y-gaps between stacks, spanning the stacks' x-extent."""
    if not stacks:
        return ((0.0, 0.0, width_m, length_m),)
    xs0 = min(s[0] for s in stacks)
    xs1 = max(s[2] for s in stacks)
    ordered = sorted(stacks, key=lambda s: s[1])
    edges = [0.0]
    for s in ordered:
        edges += [s[1], s[3]]
    edges.append(length_m)
    aisles = []
    for lo, hi in zip(edges[::2], edges[1::2]):
        if hi - lo > 1e-9:
            aisles.append((xs0, lo, xs1, hi))
    return tuple(aisles)


@dataclass(frozen=True)
class LayoutSpec:
    width_m: float
    length_m: float
    stacks: tuple[Rect, ...]
    beacons: tuple[Beacon, ...]
    stack_map: dict[tuple[int, int], int]
    num_aisles: int
    max_stacks: int = 2
    aisles: tuple[Rect, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "stacks", tuple(tuple(map(float, s)) for s in self.stacks))
        object.__setattr__(self, "beacons", tuple(self.beacons))
        if not self.aisles:
            object.__setattr__(self, "aisles", derive_aisles(self.stacks, self.width_m, self.length_m))
        else:
            object.__setattr__(self, "aisles", tuple(tuple(map(float, a)) for a in self.aisles))
        self.validate()

    def validate(self) -> None:
        if self.width_m <= 0 or self.length_m <= 0:
            raise ValueError("layout dimensions must be positive")
        ids = [b.id for b in self.beacons]
        if len(set(ids)) != len(ids):
            raise ValueError("beacon ids must be unique")
        for b in self.beacons:
            if not (0 <= b.x <= self.width_m and 0 <= b.y <= self.length_m):
                raise ValueError(f"beacon {b.id} lies outside the floor")
        for x0, y0, x1, y1 in self.stacks:
            if not (x0 < x1 and y0 < y1):
                raise ValueError(f"degenerate stack rectangle {(x0, y0, x1, y1)}")
        if len(self.aisles) != self.num_aisles:
            raise ValueError(
                f"num_aisles={self.num_aisles} but {len(self.aisles)} aisle regions"
            )
        groups = sorted({b.group for b in self.beacons})
        for a in range(self.num_aisles):
            for g in groups:
                if (a, g) not in self.stack_map:
                    raise ValueError(f"stack_map has no entry for aisle {a}, group {g}")
                s = self.stack_map[(a, g)]
                if not (0 <= s <= self.max_stacks):
                    raise ValueError(f"stack_map entry ({a}, {g}) = {s} outside [0, {self.max_stacks}]")

    # -- lookups -----------------------------------------------------------

    @property
    def beacon_ids(self) -> np.ndarray:
        return np.array([b.id for b in self.beacons], dtype=int)

    @property
    def beacon_xy(self) -> np.ndarray:
        return np.array([(b.x, b.y) for b in self.beacons], dtype=float)

    def beacon(self, beacon_id: int) -> Beacon:
        for b in self.beacons:
            if b.id == beacon_id:
                return b
        raise ValueError(f"unknown beacon id {beacon_id}")

    def stack_table(self) -> np.ndarray:
        """``(num_aisles, num_beacons)`` stack counts, beacons in layout order."""
        return np.array(
            [[self.stack_map[(a, b.group)] for b in self.beacons] for a in range(self.num_aisles)],
            dtype=int,
        )

    def in_stack(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        hit = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        for s in self.stacks:
            hit |= _in_rect(x, y, s)
        return hit

    def in_bounds(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return (x >= 0) & (x <= self.width_m) & (y >= 0) & (y <= self.length_m)

    def locate(self, x, y):
        """Aisle index and corridor flag for points.

        Points outside every aisle region take the aisle whose y-interval is
        nearest and are flagged as corridor.
        """
        x = np.atleast_1d(np.asarray(x, float))
        y = np.atleast_1d(np.asarray(y, float))
        aisle = np.full(x.shape, -1, dtype=int)
        for i, a in enumerate(self.aisles):
            aisle = np.where((aisle < 0) & _in_rect(x, y, a), i, aisle)
        corridor = aisle < 0
        if corridor.any():
            lo = np.array([a[1] for a in self.aisles])
            hi = np.array([a[3] for a in self.aisles])
            yy = y[corridor][:, None]
            gap = np.maximum(lo - yy, 0) + np.maximum(yy - hi, 0)
            aisle[corridor] = np.argmin(gap, axis=1)
        return aisle, corridor

    def aisle_boundaries(self) -> np.ndarray:
        """Midpoints between consecutive aisle y-intervals (``num_aisles - 1`` values)."""
        ordered = sorted(self.aisles, key=lambda a: a[1])
        return np.array([(p[3] + n[1]) / 2 for p, n in zip(ordered, ordered[1:])])

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "width_m": self.width_m,
            "length_m": self.length_m,
            "stacks": [list(s) for s in self.stacks],
            "aisles": [list(a) for a in self.aisles],
            "beacons": [{"id": b.id, "x": b.x, "y": b.y, "group": b.group} for b in self.beacons],
            "stack_map": [
                {"aisle": a, "group": g, "stacks": s} for (a, g), s in sorted(self.stack_map.items())
            ],
            "num_aisles": self.num_aisles,
            "max_stacks": self.max_stacks,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LayoutSpec":
        try:
            return cls(
                width_m=float(obj["width_m"]),
                length_m=float(obj["length_m"]),
                stacks=tuple(tuple(s) for s in obj.get("stacks", [])),
                beacons=tuple(
                    Beacon(int(b["id"]), float(b["x"]), float(b["y"]), int(b["group"]))
                    for b in obj["beacons"]
                ),
                stack_map={
                    (int(e["aisle"]), int(e["group"])): int(e["stacks"]) for e in obj["stack_map"]
                },
                num_aisles=int(obj["num_aisles"]),
                max_stacks=int(obj.get("max_stacks", 2)),
                aisles=tuple(tuple(a) for a in obj.get("aisles", [])),
            )
        except KeyError as e:
            raise ValueError(f"layout is missing field {e.args[0]!r}") from None

    def save(self, path) -> None:
        from .io import atomic_write_text

        atomic_write_text(path, json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "LayoutSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


def stacks_between(layout: LayoutSpec, aisle: int, beacon_id: int) -> int:
    if not (0 <= aisle < layout.num_aisles):
        raise ValueError(f"aisle {aisle} outside [0, {layout.num_aisles})")
    return layout.stack_map[(aisle, layout.beacon(beacon_id).group)]


def demo_layout() -> LayoutSpec:
    """Three-stack test floor: 11 m x 0.5 m stacks separated by 0.7 m aisles.

    Aisle 0 runs below the first stack, aisles 1 and 2 between stacks. Each
    aisle's group is the beacons on the 12-beacon rows facing it (ids 1-12,
    13-36 and 37-60). The third stack's outward row faces no aisle and carries
    no beacons. A 1.5 m corridor at each end of the stacks connects the aisles.
    """
    x0, x1 = 1.5, 12.5
    aisle_w, stack_w = 0.7, 0.5
    stacks = []
    y = aisle_w
    for _ in range(3):
        stacks.append((x0, y, x1, y + stack_w))
        y += stack_w + aisle_w
    length = stacks[-1][3]
    xs = [2.0 + 0.91 * j for j in range(12)]
    rows = [
        (stacks[0][1], 0),  # stack 1, face toward aisle 0
        (stacks[0][3], 1),  # stack 1, face toward aisle 1
        (stacks[1][1], 1),  # stack 2, face toward aisle 1
        (stacks[1][3], 2),  # stack 2, face toward aisle 2
        (stacks[2][1], 2),  # stack 3, face toward aisle 2
    ]
    beacons = []
    bid = 1
    for ry, group in rows:
        for bx in xs:
            beacons.append(Beacon(bid, round(bx, 4), round(ry, 4), group))
            bid += 1
    stack_map = {(a, g): min(abs(a - g), 2) for a in range(3) for g in range(3)}
    return LayoutSpec(
        width_m=14.0,
        length_m=round(length, 4),
        stacks=tuple(tuple(round(v, 4) for v in s) for s in stacks),
        beacons=tuple(beacons),
        stack_map=stack_map,
        num_aisles=3,
        max_stacks=2,
    )
