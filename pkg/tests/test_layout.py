import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pktcount.io import data_path
from pktcount.layout import Beacon, LayoutSpec, demo_layout, stacks_between


def small_layout(**kw):
    args = dict(
        width_m=10.0, length_m=5.0, stacks=((1.0, 2.0, 9.0, 3.0),),
        beacons=(Beacon(1, 2.0, 2.0, 0), Beacon(2, 2.0, 3.0, 1)),
        stack_map={(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 0}, num_aisles=2, max_stacks=1,
    )
    args.update(kw)
    return LayoutSpec(**args)


class TestDemoLayout:
    def test_groups(self, layout):
        ids = {g: sorted(b.id for b in layout.beacons if b.group == g) for g in range(3)}
        assert ids[0] == list(range(1, 13))
        assert ids[1] == list(range(13, 37))
        assert ids[2] == list(range(37, 61))

    def test_stacks_between(self, layout):
        assert stacks_between(layout, 0, 5) == 0  # same-aisle group
        assert stacks_between(layout, 0, 20) == 1  # group of aisle 1
        assert stacks_between(layout, 0, 50) == 2  # group of aisle 2
        assert stacks_between(layout, 2, 1) == 2

    def test_unknown_inputs(self, layout):
        with pytest.raises(ValueError):
            stacks_between(layout, 3, 1)
        with pytest.raises(ValueError):
            stacks_between(layout, 0, 999)

    def test_group_invariant(self, layout):
        tab = layout.stack_table()
        groups = np.array([b.group for b in layout.beacons])
        for g in np.unique(groups):
            cols = tab[:, groups == g]
            assert np.all(cols == cols[:, :1])

    def test_aisles(self, layout):
        assert layout.num_aisles == 3
        lo = sorted(a[1] for a in layout.aisles)
        assert lo == pytest.approx([0.0, 1.2, 2.4])
        assert layout.aisle_boundaries() == pytest.approx([0.95, 2.15])

    def test_locate(self, layout):
        a, corr = layout.locate([5.0, 5.0, 5.0, 0.5, 13.5], [0.3, 1.5, 2.8, 1.5, 3.0])
        assert a.tolist() == [0, 1, 2, 1, 2]
        assert corr.tolist() == [False, False, False, True, True]

    def test_packaged_fixture(self, layout):
        assert LayoutSpec.load(data_path("demo_layout.json")) == layout

    def test_json_schema(self, layout, tmp_path):
        layout.save(tmp_path / "l.json")
        obj = json.loads((tmp_path / "l.json").read_text())
        for key in ("width_m", "length_m", "stacks", "beacons", "stack_map", "num_aisles", "max_stacks"):
            assert key in obj
        assert obj["stack_map"][0].keys() == {"aisle", "group", "stacks"}
        assert LayoutSpec.from_json(obj) == layout


class TestValidation:
    def test_ok(self):
        small_layout()

    def test_duplicate_ids(self):
        with pytest.raises(ValueError, match="unique"):
            small_layout(beacons=(Beacon(1, 2.0, 2.0, 0), Beacon(1, 2.0, 3.0, 1)))

    def test_beacon_outside(self):
        with pytest.raises(ValueError, match="outside"):
            small_layout(beacons=(Beacon(1, 12.0, 2.0, 0), Beacon(2, 2.0, 3.0, 1)))

    def test_stack_map_not_total(self):
        with pytest.raises(ValueError, match="no entry"):
            small_layout(stack_map={(0, 0): 0, (0, 1): 1, (1, 0): 1})

    def test_stack_map_range(self):
        with pytest.raises(ValueError):
            small_layout(stack_map={(0, 0): 0, (0, 1): 2, (1, 0): 1, (1, 1): 0})

    def test_aisle_count(self):
        with pytest.raises(ValueError, match="num_aisles"):
            small_layout(num_aisles=3)

    def test_missing_field(self):
        obj = small_layout().to_json()
        del obj["beacons"]
        with pytest.raises(ValueError, match="beacons"):
            LayoutSpec.from_json(obj)


@given(st.floats(0, 14), st.floats(0, 3.6))
def test_locate_total(x, y):
    lay = demo_layout()
    a, _ = lay.locate([x], [y])
    assert 0 <= a[0] < lay.num_aisles
