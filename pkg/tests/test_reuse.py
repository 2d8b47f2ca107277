from __future__ import annotations

import pytest

from simdconv.config import MachineConfig
from simdconv.conv_model import ConvSpec, Precision, Variant
from simdconv.errors import ALIGNMENT, LAYOUT, OVERSIZED, REGISTER_PRESSURE, CandidateRejected
from simdconv.lowering import lazy_store_group, lower
from simdconv.pipeline import compile_schedule
from simdconv.reuse import build_reuse_graph, coalesce, plan_loads
from simdconv.schedule import Schedule, apply_padding, plan_storage
from simdconv.workloads import RUNNING_EXAMPLE, image_filter, image_filter_optimum, running_example_schedule

I16, I32 = Precision.I16, Precision.I32
M = MachineConfig()


def _stage(spec, sched):
    padded = apply_padding(spec, sched, M)
    storages = plan_storage(padded, sched, M)
    grouped = lazy_store_group(lower(padded, sched))
    return grouped, storages


def _graph(spec, sched, tensor):
    grouped, storages = _stage(spec, sched)
    return build_reuse_graph(grouped, tensor, storages[tensor], M), grouped, storages


def test_running_example_input_rows_are_chains():
    graph, _, _ = _graph(RUNNING_EXAMPLE, running_example_schedule(), "I")
    assert len(graph.nodes) == 12
    comps = sorted(sorted(c) for c in graph.components())
    assert len(comps) == 3 and all(len(c) == 4 for c in comps)
    row0 = [graph.nodes[i].access.render(RUNNING_EXAMPLE.extents("I")) for i in comps[0]]
    assert row0 == ["I(x:x+15, y)", "I(x+1:x+16, y)", "I(x+2:x+17, y)", "I(x+3:x+18, y)"]


def test_distant_loads_have_no_edge():
    # one 64-element input row apart, 16 lanes: disjoint byte intervals
    spec = ConvSpec(x=64, y=2, r=1, s=2, precision=I16)
    graph, _, _ = _graph(spec, Schedule("xy", "x", 16), "I")
    assert len(graph.nodes) == 2
    assert graph.nodes[1].start - graph.nodes[0].start == 128
    assert graph.edges == ()


def test_weight_scalars_form_one_component():
    graph, _, _ = _graph(RUNNING_EXAMPLE, running_example_schedule(), "W")
    ew = RUNNING_EXAMPLE.extents("W")
    first_row = [i for i, n in enumerate(graph.nodes) if n.access.coords({})["s"] == 0]
    assert [graph.nodes[i].access.render(ew) for i in first_row] == ["W(0, 0)", "W(1, 0)", "W(2, 0)", "W(3, 0)"]
    comps = graph.components()
    assert any(set(first_row) <= set(c) for c in comps)


def test_coalescing_running_example():
    graph, _, _ = _graph(RUNNING_EXAMPLE, running_example_schedule(), "I")
    windows = sorted(coalesce(graph, M), key=lambda w: w.start)
    # each row y+d is covered by one 32-element (64-byte) window
    assert [(w.start, w.width) for w in windows] == [(0, 64), (48, 64), (96, 64)]


def test_aligned_single_load_is_its_own_window():
    spec = ConvSpec(variant=Variant.PW, x=16, precision=I16)
    graph, _, _ = _graph(spec, Schedule("x", "x", 16), "I")
    (win,) = coalesce(graph, M)
    assert (win.start, win.width) == (graph.nodes[0].start, 32)


def test_long_chain_splits_into_register_sized_windows():
    spec = ConvSpec(x=64, y=1, r=2, precision=I32)
    graph, _, _ = _graph(spec, Schedule("x", "x", 8, {"x": 8}), "I")
    assert len(graph.components()) == 1
    windows = coalesce(graph, M)
    assert len(windows) >= 2
    for w in windows:
        assert w.width <= M.max_register_bytes and w.start % M.alignment_bytes == 0
        for i in w.nodes:
            assert w.start <= graph.nodes[i].start and graph.nodes[i].end <= w.start + w.width


def test_running_example_plan():
    grouped, storages = _stage(RUNNING_EXAMPLE, running_example_schedule())
    plan = plan_loads(grouped, storages, M)
    loads = {l.gid: l for l in plan.loads}
    assert (loads["V1"].tensor, loads["V1"].start, loads["V1"].bits) == ("I", 0, 512)
    assert (loads["V2"].tensor, loads["V2"].start) == ("W", 0)
    assert sum(l.tensor == "I" for l in plan.loads) == 3
    assert sum(l.tensor == "W" for l in plan.loads) == 1
    row0 = grouped.groups[0].macs[0]
    assert plan.gid_of(row0.op2) == "V1" and plan.gid_of(row0.op1) == "V2"
    assert plan.bindings[grouped.groups[0].macs[1].op2].offsets[:3] == (1, 2, 3)


def test_pointwise_plan_has_one_load_per_tensor():
    spec = ConvSpec(variant=Variant.PW, x=16, y=2, precision=I16)
    grouped, storages = _stage(spec, Schedule("xy", "x", 16))
    plan = plan_loads(grouped, storages, M)
    assert sorted(l.tensor for l in plan.loads) == ["I", "W"]


def test_blocked_input_window_covers_channel_pairs():
    spec = ConvSpec(x=16, y=2, c=2, k=2, r=3, s=3, precision=I16)
    sched = Schedule("xy", "x", 16, layouts={"I": "N(C/2)YX(2)"})
    grouped, storages = _stage(spec, sched)
    plan = plan_loads(grouped, storages, M)
    st = storages["I"]
    for group in grouped.groups:
        for row in group.macs:
            load = plan.load(plan.gid_of(row.op2))
            for lane in range(16):
                addr = st.raw_address(row.op2.coords({}, lane)) * 2
                assert load.start <= addr < load.start + load.width
    # a window holds both channels of a block, so channel 0 and 1 rows share registers
    c0 = {plan.gid_of(r.op2) for g in grouped.groups for r in g.macs if r.op2.coords({})["c"] == 0}
    c1 = {plan.gid_of(r.op2) for g in grouped.groups for r in g.macs if r.op2.coords({})["c"] == 1}
    assert c0 & c1


def test_rejection_reasons():
    cases = [
        (ConvSpec(x=16, y=2, c=8, precision=I16), Schedule("xy", "x", 16, layouts={"I": "NYXC"}), OVERSIZED),
        (ConvSpec(x=16, y=2, r=3, s=3, precision=I16), Schedule("xy", "x", 16, layouts={"I": "NYX"}), None),
        (ConvSpec(x=16, y=2, c=8, k=16, precision=I16),
         Schedule("kxy", "x", 16, layouts={"W": "(K/16)SR(C/2)(16)(2)"}), LAYOUT),
        (ConvSpec(x=16, y=3, r=1, s=1, precision=I32), Schedule("xy", "x", 8, layouts={"I": "NCXY"}), ALIGNMENT),
    ]
    for spec, sched, reason in cases:
        grouped, storages = _stage(spec, sched)
        if reason is None:
            plan_loads(grouped, storages, M)
            continue
        with pytest.raises(CandidateRejected) as exc:
            plan_loads(grouped, storages, M)
        assert exc.value.reason == reason


def test_reloads_keep_catalog_optimum_within_register_file():
    spec = image_filter(5, I32, x=64, y=16)
    compiled = compile_schedule(spec, image_filter_optimum(5, I32))
    assert compiled.plan.peak_bytes <= M.register_file_bytes
    reloaded = [g for g, segs in compiled.plan.segments.items() if len(segs) > 1]
    body_loads = [i.dst for i in compiled.program.body if i.op == "VLOAD" and i.offset == 0]
    assert len(body_loads) > len(set(body_loads)) or not reloaded


def test_group_working_set_over_budget_is_rejected():
    # 3x3 over 8 channel pairs: every input window of the group is live at once
    spec = ConvSpec(x=64, y=8, c=8, k=8, r=3, s=3, precision=I16)
    with pytest.raises(CandidateRejected) as exc:
        compile_schedule(spec, Schedule("xyk", "x", 16, layouts={"I": "N(C/2)YX(2)"}))
    assert exc.value.reason == REGISTER_PRESSURE
    assert "> 256" in exc.value.detail
