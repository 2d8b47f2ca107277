from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from simdconv.conv_model import ConvSpec, Precision, Variant
from simdconv.lowering import TripletBody, lazy_store_group, lower
from simdconv.schedule import PAD_EVEN, Schedule, ScheduleSpace, apply_padding, space_list
from simdconv.config import MachineConfig
from simdconv.workloads import RUNNING_EXAMPLE, running_example_schedule

I16, I32 = Precision.I16, Precision.I32
M = MachineConfig()


def _rows(spec, sched):
    return lower(spec, sched).rows


def test_running_example_rows_match_table():
    body = lower(RUNNING_EXAMPLE, running_example_schedule())
    assert len(body.rows) == 12
    eo, ei = RUNNING_EXAMPLE.extents("O"), RUNNING_EXAMPLE.extents("I")
    ew = RUNNING_EXAMPLE.extents("W")
    first, second = body.rows[0], body.rows[1]
    assert first.update.render(eo) == "O(x:x+15, y)"
    assert first.op1.render(ew) == "W(0, 0)"
    assert first.op2.render(ei) == "I(x:x+15, y)"
    assert second.op2.render(ei) == "I(x+1:x+16, y)"
    assert body.rows[4].op1.render(ew) == "W(0, 1)"
    assert body.rows[4].op2.render(ei) == "I(x:x+15, y+1)"
    assert first.op2.render() == "I(x:x+15, y, z, n)"


def test_table_dump_lists_every_row():
    text = lower(RUNNING_EXAMPLE, running_example_schedule()).dump()
    lines = text.strip().splitlines()
    assert len(lines) == 2 + 12
    assert "I(x+3:x+18, y+2)" in lines[-1]


def test_pointwise_single_row():
    spec = ConvSpec(variant=Variant.PW, x=16, precision=I16)
    assert len(_rows(spec, Schedule("x", "x", 16))) == 1


def test_lazy_stores_group_by_update():
    grouped = lazy_store_group(lower(RUNNING_EXAMPLE, running_example_schedule()))
    assert len(grouped.groups) == 1 and grouped.row_count == 12
    spec = ConvSpec(x=16, y=4, r=4, s=3, precision=I16)
    grouped = lazy_store_group(lower(spec, Schedule("xy", "x", 16, {"y": 2})))
    eo = spec.extents("O")
    assert [g.update.render(eo) for g in grouped.groups] == ["O(x:x+15, y)", "O(x:x+15, y+1)"]
    assert all(len(g.macs) == 12 for g in grouped.groups)


def test_empty_body_groups_to_nothing():
    spec = ConvSpec(x=16, precision=I16)
    body = lower(spec, Schedule("x", "x", 16))
    empty = TripletBody((), body.loops, spec, 16, "x")
    assert lazy_store_group(empty).groups == ()


def test_padding_marks_zero_columns():
    spec = ConvSpec(x=16, y=2, r=3, s=3, precision=I16)
    sched = Schedule("xy", "x", 16, pad_filter=PAD_EVEN)
    rows = lower(apply_padding(spec, sched, M), sched).rows
    assert len(rows) == 12
    assert sum(not r.real for r in rows) == 3


def test_row_order_follows_input_layout():
    spec = ConvSpec(x=16, y=1, c=4, r=2, s=1, precision=I16)
    planar = _rows(spec, Schedule("x", "x", 16, layouts={"I": "NCYX"}))
    blocked = _rows(spec, Schedule("x", "x", 16, layouts={"I": "N(C/2)YX(2)"}))
    assert [r.op1.coords({})["c"] for r in planar] == [0, 0, 1, 1, 2, 2, 3, 3]
    # channel pairs sit next to each other in memory, so they are walked together
    assert [r.op1.coords({})["c"] for r in blocked][:4] == [0, 1, 0, 1]


@settings(max_examples=30, deadline=None)
@given(
    r=st.integers(1, 4),
    s=st.integers(1, 3),
    c=st.integers(1, 3),
    ujy=st.sampled_from([1, 2]),
    ujx=st.sampled_from([1, 2]),
    p=st.sampled_from([I16, I32]),
)
def test_row_count_is_reduction_volume_times_replicas(r, s, c, ujy, ujx, p):
    lanes = M.lanes(p)
    spec = ConvSpec(x=lanes * 2, y=2, r=r, s=s, c=c, precision=p)
    sched = Schedule("xy", "x", lanes, {"x": ujx, "y": ujy})
    body = lower(spec, sched)
    assert len(body.rows) == r * s * c * ujx * ujy
    grouped = lazy_store_group(body)
    assert len(grouped.groups) == ujx * ujy
    assert grouped.row_count == len(body.rows)


def test_every_space_member_lowers():
    spec = ConvSpec(x=16, y=2, c=2, k=2, r=2, s=2, precision=I16)
    for sched in space_list(spec, ScheduleSpace(uj_candidates=(1, 2)), M)[:50]:
        replicas = 1
        for _, f in sched.uj:
            replicas *= f
        assert len(lower(spec, sched).rows) == 8 * replicas
