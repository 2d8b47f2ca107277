"""End-to-end acceptance checks; each test records one pass/fail line."""

from __future__ import annotations

import random
import time

import numpy as np
import pytest

from simdconv.autotuner import evaluate, tune
from simdconv.config import MachineConfig
from simdconv.conv_model import ConvSpec, Precision, make_workload, reference_convolve, total_macs
from simdconv.errors import (
    ALIGNMENT,
    OVERSIZED,
    PROGRAM_SIZE,
    REGISTER_PRESSURE,
    SELECT_INFEASIBLE,
    CandidateRejected,
)
from simdconv.machine import simulate, throughput, validate
from simdconv.pipeline import compile_schedule
from simdconv.schedule import PAD_EVEN, Schedule, ScheduleSpace, space_list
from simdconv.workloads import (
    RUNNING_EXAMPLE,
    desk_workloads,
    image_filter,
    image_filter_optimum,
    running_example_schedule,
)

I16, I32 = Precision.I16, Precision.I32
M = MachineConfig()

pytestmark = pytest.mark.slow


def test_criterion_1_desk_workloads_match_oracle(criterion):
    start = time.perf_counter()
    specs = desk_workloads()
    accepted = []
    for n, spec in enumerate(specs):
        schedules = space_list(spec, ScheduleSpace(), M)
        random.Random(n).shuffle(schedules)
        ok = 0
        for i, sched in enumerate(schedules):
            # evaluate validates, simulates and raises on any oracle mismatch
            ok += evaluate(i, spec, sched, M, seed=n).ok
            if ok == 5:
                break
        accepted.append(ok)
    elapsed = time.perf_counter() - start
    good = len(specs) >= 40 and min(accepted) >= 5 and elapsed < 300
    assert criterion(
        1, good, f"{len(specs)} workloads, {sum(accepted)} accepted schedules (min {min(accepted)}) in {elapsed:.1f}s"
    )


def test_criterion_2_running_example_counts(criterion):
    c = compile_schedule(RUNNING_EXAMPLE, running_example_schedule(), M)
    loads = [l.tensor for l in c.plan.loads]
    ops = [op for g in c.fused for op in g]
    first = ops[0]
    got = {
        "rows": len(c.body.rows),
        "groups": len(c.grouped.groups),
        "input loads": loads.count("I"),
        "weight loads": loads.count("W"),
        "fused ops": len(ops),
        "columns": {op.columns for op in ops},
        "input select": (first.op2[1].base, first.op2[1].lane_stride, first.op2[1].col_stride),
        "weight select": (first.op1[1].base, first.op1[1].lane_stride, first.op1[1].col_stride),
    }
    want = {
        "rows": 12,
        "groups": 1,
        "input loads": 3,
        "weight loads": 1,
        "fused ops": 6,
        "columns": {2},
        "input select": (0, 1, 1),
        "weight select": (0, 0, 1),
    }
    assert criterion(2, got == want, ", ".join(f"{k}={v}" for k, v in got.items()))


@pytest.fixture(scope="module")
def tuned_64x8():
    cache = {}

    def get(size, precision):
        key = (size, precision)
        if key not in cache:
            spec = ConvSpec(x=64, y=8, c=8, k=8, r=size, s=size, precision=precision)
            cache[key] = tune(spec, ScheduleSpace(), M)
        return cache[key]

    return get


def test_criterion_3_tuned_throughput(criterion, tuned_64x8):
    floors = {I32: 7.2, I16: 20.8}
    parts, good = [], True
    for size in (3, 5):
        for p in (I32, I16):
            r = tuned_64x8(size, p)
            good &= r.best.macs_per_cycle >= floors[p]
            parts.append(f"{size}x{size} {p.value} {r.best.macs_per_cycle:.2f} ({r.best.schedule.describe()})")
    assert criterion(3, good, "; ".join(parts))


def test_criterion_4_reported_optima(criterion):
    # 64x16 is the desk scale; 256x16 is the full image size and runs as fast here
    parts, good = [], True
    for x, y in ((64, 16), (256, 16)):
        for size in (3, 5):
            for p in (I32, I16):
                spec = image_filter(size, p, x=x, y=y)
                opt = image_filter_optimum(size, p)
                report = tune(spec, ScheduleSpace(), M)
                in_space = opt in space_list(spec, ScheduleSpace(), M)
                cand = evaluate(0, spec, opt, M)
                ratio = cand.macs_per_cycle / report.best.macs_per_cycle if cand.ok else 0.0
                good &= in_space and cand.ok and ratio >= 0.95
                parts.append(f"{x}x{y} {size}x{size} {p.value} {ratio:.3f}")
    assert criterion(4, good, "optimum/best: " + ", ".join(parts))


def test_criterion_5_padding_to_even_columns(criterion):
    spec = image_filter(3, I16, x=64, y=16)
    sched = image_filter_optimum(3, I16)
    c = compile_schedule(spec, sched, M)
    w = make_workload(spec, 0)
    out = simulate(c.program, w, config=M).output
    same = np.array_equal(out.values, reference_convolve(spec, w.input, w.weights).values)
    tp = throughput(c.program, M)
    columns = c.padded.spec.r
    honest = tp.macs_per_cycle == total_macs(spec) / tp.total_cycles and c.program.total_macs == total_macs(spec)
    good = sched.pad_filter == PAD_EVEN and columns == 4 and same and honest
    assert criterion(
        5, good, f"padded r={columns}, oracle {'equal' if same else 'differs'}, {tp.macs_per_cycle:.2f} MACs/cycle over {total_macs(spec)} real MACs"
    )


INVALID = [
    # misaligned layouts: the y or k loop steps one 4-byte element through memory
    ("y-innermost input", ConvSpec(x=16, y=3, r=1, s=1, precision=I32), Schedule("xy", "x", 8, layouts={"I": "NCXY"}), ALIGNMENT),
    ("y-innermost input, two channels", ConvSpec(x=16, y=2, c=2, r=1, s=1, precision=I32), Schedule("xy", "x", 8, layouts={"I": "NCXY"}), ALIGNMENT),
    ("k-innermost weights", ConvSpec(x=8, y=4, r=1, s=1, k=2, precision=I32), Schedule("kyx", "x", 8, layouts={"W": "CSRK"}), ALIGNMENT),
    # one vector access wider than the largest register
    ("channel-last 16-bit input", ConvSpec(x=16, y=2, c=8, precision=I16), Schedule("xy", "x", 16, layouts={"I": "NYXC"}), OVERSIZED),
    ("channel-last 32-bit input", ConvSpec(x=16, y=2, c=8, precision=I32), Schedule("xy", "x", 8, layouts={"I": "NYXC"}), OVERSIZED),
    # channel-pair weights put neighbouring taps two elements apart
    ("paired weights, c=2", ConvSpec(x=16, y=2, c=2, k=2, r=3, s=3, precision=I16),
     Schedule("xyk", "x", 16, layouts={"W": "K(C/2)SR(2)"}, pad_filter=PAD_EVEN), SELECT_INFEASIBLE),
    ("paired weights, c=8", ConvSpec(x=16, y=2, c=8, k=2, r=3, s=3, precision=I16),
     Schedule("xyk", "x", 16, layouts={"W": "K(C/2)SR(2)"}, pad_filter=PAD_EVEN), SELECT_INFEASIBLE),
    # eight channel pairs of input rows live in one group
    ("3x3 channel pairs", ConvSpec(x=64, y=8, c=8, k=8, r=3, s=3, precision=I16),
     Schedule("xyk", "x", 16, layouts={"I": "N(C/2)YX(2)"}, pad_filter=PAD_EVEN), REGISTER_PRESSURE),
    ("5x5 channel pairs", ConvSpec(x=64, y=8, c=8, k=8, r=5, s=5, precision=I16),
     Schedule("xyk", "x", 16, layouts={"I": "N(C/2)YX(2)"}, pad_filter=PAD_EVEN), REGISTER_PRESSURE),
    # fully unrolled bodies beyond the instruction budget
    ("7x7 over 8 channels, uj_y=8", ConvSpec(x=64, y=8, c=8, k=8, r=7, s=7, precision=I32), Schedule("xyk", "x", 8, {"y": 8}), PROGRAM_SIZE),
    ("5x5, uj_x=4 uj_y=8", ConvSpec(x=64, y=8, c=2, k=2, r=5, s=5, precision=I32), Schedule("xy", "x", 8, {"x": 4, "y": 8}), PROGRAM_SIZE),
]


def test_criterion_6_rejections_are_sound(criterion):
    failures = []
    for name, spec, sched, reason in INVALID:
        try:
            compile_schedule(spec, sched, M)
            failures.append(f"{name}: accepted")
            continue
        except CandidateRejected as exc:
            if exc.reason != reason:
                failures.append(f"{name}: {exc.reason} instead of {reason}")
                continue
        forced = compile_schedule(spec, sched, M, checks=False)
        kinds = {v.kind for v in validate(forced.program, M)}
        if reason not in kinds:
            failures.append(f"{name}: forced program shows {sorted(kinds)}")
    reasons = {r for *_, r in INVALID}
    good = not failures and len(INVALID) >= 10 and len(reasons) == 5
    detail = f"{len(INVALID)} candidates over {len(reasons)} reasons" + (f"; {failures}" if failures else ", each confirmed by validate")
    assert criterion(6, good, detail)


def test_criterion_7_parallel_reports_identical(criterion):
    specs = [
        ConvSpec(x=32, y=4, c=2, k=2, r=3, s=3, precision=I16),
        ConvSpec(x=32, y=4, c=4, k=2, r=2, s=2, precision=I32),
        image_filter(5, I32, x=64, y=16),
    ]
    same = []
    for spec in specs:
        one = tune(spec, ScheduleSpace(), M, parallelism=1).to_json()
        eight = tune(spec, ScheduleSpace(), M, parallelism=8).to_json()
        same.append(one == eight)
    assert criterion(7, all(same), f"{sum(same)}/{len(specs)} reports byte-identical at parallelism 1 vs 8")
