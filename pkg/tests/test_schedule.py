from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simdconv.config import MachineConfig
from simdconv.conv_model import ConvSpec, Precision
from simdconv.errors import INVALID_SCHEDULE, CandidateRejected, InvalidSpec, NoCandidates, OutOfBounds
from simdconv.schedule import (
    CANONICAL,
    PAD_EVEN,
    DataLayout,
    Schedule,
    ScheduleSpace,
    apply_padding,
    check_schedule,
    layout_address,
    residual_loops,
    space_list,
    storage_for,
)
from simdconv.workloads import RUNNING_EXAMPLE, image_filter, image_filter_optimum

I16, I32 = Precision.I16, Precision.I32
M = MachineConfig()


def test_layout_address_examples():
    assert layout_address(DataLayout.parse("Y'X'"), {"x": 3, "y": 2}, {"x": 10, "y": 5}) == 23
    assert layout_address(DataLayout.parse("(C/2)Y'X'(2)"), {"c": 3, "y": 0, "x": 0}, {"c": 8, "y": 4, "x": 144}) == 1153
    assert layout_address(DataLayout.parse("KCSR"), {"k": 0, "c": 0, "s": 0, "r": 2}, {"k": 1, "c": 1, "s": 1, "r": 3}) == 2


def test_layout_address_out_of_range():
    with pytest.raises(OutOfBounds):
        layout_address(DataLayout.parse("KCSR"), {"r": 3}, {"k": 1, "c": 1, "s": 1, "r": 3})


def test_blocked_brute_force_enumeration():
    # walk (C/2)Y'X'(2) as the nest it denotes and compare offsets one by one
    ext = {"c": 4, "y": 2, "x": 3}
    layout = DataLayout.parse("(C/2)Y'X'(2)")
    offset = 0
    for co, y, x, ci in itertools.product(range(2), range(2), range(3), range(2)):
        assert layout_address(layout, {"c": co * 2 + ci, "y": y, "x": x}, ext) == offset
        offset += 1


def test_parse_nests_equal_blocks_last_opened_first():
    layout = DataLayout.parse("(K/8)(C/8)SR(8)(8)")
    assert layout.terms[-2:] == (("c", 8), ("k", 8))
    assert DataLayout.parse("(K/16)SR(C/2)(16)(2)").terms[-2:] == (("k", 16), ("c", 2))


@pytest.mark.parametrize("text", ["KCSR", "(C/2)Y'X'(2)", "(K/8)(C/8)SR(8)(8)", "(K/16)SR(C/2)(16)(2)", "(C/8)(K/8)SR(K:8)(C:8)"])
def test_layout_text_round_trip(text):
    layout = DataLayout.parse(text)
    assert DataLayout.parse(str(layout)) == layout


@pytest.mark.parametrize("text", ["(C/2)YX", "KK", "(3)", "K$"])
def test_bad_layouts(text):
    with pytest.raises(InvalidSpec):
        DataLayout.parse(text)


@st.composite
def layouts_and_extents(draw):
    dims = ["c", "y", "x"]
    order = draw(st.permutations(dims))
    ext = {d: draw(st.integers(1, 5)) for d in dims}
    blocked = draw(st.sampled_from([None] + dims))
    terms = [(d, None) for d in order]
    if blocked is not None:
        block = draw(st.sampled_from([2, 4]))
        ext[blocked] = block * draw(st.integers(1, 3))
        terms.insert(draw(st.integers(order.index(blocked) + 1, len(terms))), (blocked, block))
    return DataLayout(tuple(terms)), ext


@settings(max_examples=60, deadline=None)
@given(layouts_and_extents())
def test_layout_is_a_bijection(case):
    layout, ext = case
    offsets = {
        layout_address(layout, dict(zip("cyx", p)), ext)
        for p in itertools.product(range(ext["c"]), range(ext["y"]), range(ext["x"]))
    }
    assert offsets == set(range(ext["c"] * ext["y"] * ext["x"]))


def test_storage_padding_aligns_rows_and_blocks():
    # running-example weights: the 4 taps of a row are padded to 8 so rows start 16-byte aligned
    st_w = storage_for("W", CANONICAL["W"], RUNNING_EXAMPLE.extents("W"), I16)
    assert st_w.extent_map["r"] == 8
    st_i = storage_for("I", DataLayout.parse("N(C/2)YX(2)"), {"n": 1, "c": 3, "z": 1, "y": 4, "x": 9}, I16)
    assert st_i.extent_map["c"] == 4
    assert (st_i.extent_map["x"] * 2 * 2) % 16 == 0


def test_padding_rule():
    sched = Schedule("xy", "x", 16, pad_filter=PAD_EVEN)
    assert apply_padding(image_filter(3, I16), sched, M).spec.r == 4
    assert apply_padding(RUNNING_EXAMPLE, sched, M).spec.r == 4
    padded = apply_padding(image_filter(3, I32), Schedule("xy", "x", 8, pad_filter=PAD_EVEN), M)
    assert padded.spec.r == 3 and not padded.zero_fill


def test_schedule_normalization_and_round_trip():
    s = Schedule("xy", "x", 16, {"x": 1, "y": 2}, {"I": "NCZYX", "W": "CSRK"})
    assert s.uj == (("y", 2),)
    assert dict(s.layouts).keys() == {"W"}
    assert Schedule.from_dict(s.to_dict()) == s
    with pytest.raises(InvalidSpec):
        Schedule("xx", "x", 16)


def test_residual_loops_and_checks():
    spec = image_filter(3, I16, x=64, y=8)
    loops = residual_loops(spec, Schedule("xy", "x", 16, {"y": 2}))
    trips = {l.name: (l.trips, l.step) for l in loops}
    assert trips["x"] == (4, 16) and trips["y"] == (4, 2)
    with pytest.raises(CandidateRejected) as exc:
        check_schedule(spec, Schedule("xy", "x", 16, {"y": 3}), M)
    assert exc.value.reason == INVALID_SCHEDULE


def test_singleton_space():
    space = ScheduleSpace(uj_candidates=(1,), loop_orders=("xy",), vector_loop_candidates=("x",))
    assert space_list(RUNNING_EXAMPLE, space, M) == [Schedule("xy", "x", 16)]


def test_space_contains_reported_optimum():
    assert image_filter_optimum(3, I16) in space_list(image_filter(3, I16), ScheduleSpace(), M)


def test_space_without_wide_loop_is_empty():
    spec = ConvSpec(x=8, y=4, r=3, s=3, precision=I16)
    with pytest.raises(NoCandidates):
        space_list(spec, ScheduleSpace(vector_loop_candidates=("x",)), M)


def test_space_is_deterministic_and_round_trips():
    spec = ConvSpec(x=32, y=4, c=2, k=2, r=2, s=2, precision=I16)
    space = ScheduleSpace(uj_candidates=(1, 2))
    assert space_list(spec, space, M) == space_list(spec, ScheduleSpace.from_dict(space.to_dict()), M)
