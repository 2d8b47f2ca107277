from __future__ import annotations

import csv
import io
import json

import pytest

from simdconv.autotuner import evaluate, roofline_csv, roofline_points, tune
from simdconv.config import MachineConfig
from simdconv.conv_model import ConvSpec, Precision
from simdconv.errors import NoCandidates
from simdconv.schedule import Schedule, ScheduleSpace
from simdconv.workloads import RUNNING_EXAMPLE, running_example_schedule

I16, I32 = Precision.I16, Precision.I32
M = MachineConfig()
SINGLE = ScheduleSpace(uj_candidates=(1,), loop_orders=("xy",), vector_loop_candidates=("x",))


def test_singleton_space_returns_its_only_schedule():
    report = tune(RUNNING_EXAMPLE, SINGLE, M)
    assert report.space_size == 1 and len(report.all) == 1
    assert report.best.schedule == running_example_schedule()
    assert report.best.stats["kernel_cycles"] == 6


def test_report_is_independent_of_parallelism():
    spec = ConvSpec(x=32, y=4, c=2, k=2, r=2, s=2, precision=I16)
    space = ScheduleSpace(uj_candidates=(1, 2))
    one = tune(spec, space, M, parallelism=1)
    many = tune(spec, space, M, parallelism=8)
    assert one.to_json() == many.to_json()
    assert one.best.macs_per_cycle == max(c.macs_per_cycle for c in one.ok_candidates())


def test_report_json_summarizes_rejections():
    spec = ConvSpec(x=32, y=4, r=3, s=3, precision=I16)
    data = json.loads(tune(spec, ScheduleSpace(uj_candidates=(1, 2)), M).to_json())
    assert data["accepted"] + sum(data["rejected"].values()) == data["space_size"] == len(data["candidates"])
    assert all("reason" in c for c in data["candidates"] if c["status"] != "ok")
    assert "wall_time" not in data


def test_roofline_intensity_of_looped_running_example():
    spec = ConvSpec(x=64, y=4, r=4, s=3, precision=I16)
    cand = evaluate(0, spec, Schedule("xy", "x", 16), M)
    # 192 MACs per trip over 192 loaded and 32 stored bytes
    assert cand.stats["intensity"] == round(192 / (192 + 32), 6)


def test_roofline_csv_rows():
    report = tune(ConvSpec(x=32, y=4, r=2, s=2, precision=I16), ScheduleSpace(uj_candidates=(1, 2)), M)
    rows = list(csv.reader(io.StringIO(roofline_csv(report))))
    assert rows[0] == ["schedule_id", "intensity", "macs_per_cycle", "status"]
    assert len(rows) - 1 == len(roofline_points(report)) == len(report.ok_candidates())
    assert all(r[3] == "ok" for r in rows[1:])


def test_all_rejected_raises():
    spec = ConvSpec(x=16, y=2, r=3, s=3, precision=I16)
    space = ScheduleSpace(uj_candidates=(1,), loop_orders=("xy",), vector_loop_candidates=("x",), pad_candidates=("none",))
    with pytest.raises(NoCandidates):
        tune(spec, space, M)
