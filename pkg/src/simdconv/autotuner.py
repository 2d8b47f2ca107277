"""Exhaustive tuning over a pruned schedule space, with oracle checking of every candidate."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import MachineConfig
from .conv_model import ConvSpec, make_workload, reference_convolve
from .errors import CandidateRejected, InternalError, InternalMiscompile, NoCandidates
from .machine import simulate, throughput, validate
from .pipeline import compile_schedule
from .schedule import Schedule, ScheduleSpace, enumerate_space

OK = "ok"
REJECTED = "rejected"


@dataclass(frozen=True)
class Candidate:
    index: int
    schedule: Schedule
    status: str
    reason: str = ""
    detail: str = ""
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == OK

    @property
    def macs_per_cycle(self) -> float:
        return self.stats.get("macs_per_cycle", 0.0)

    def rank_key(self) -> tuple:
        return (-self.macs_per_cycle, self.stats.get("instructions", 0), self.schedule.encode())

    def to_dict(self) -> dict:
        d = {"index": self.index, "schedule": self.schedule.to_dict(), "status": self.status}
        if self.ok:
            d["stats"] = self.stats
        else:
            d["reason"] = self.reason
            d["detail"] = self.detail
        return d


@dataclass
class TuneReport:
    spec: ConvSpec
    best: Candidate
    all: list[Candidate]
    space_size: int
    wall_time: float = 0.0

    def ok_candidates(self) -> list[Candidate]:
        return [c for c in self.all if c.ok]

    def to_dict(self) -> dict:
        rejected: dict[str, int] = {}
        for c in self.all:
            if not c.ok:
                rejected[c.reason] = rejected.get(c.reason, 0) + 1
        return {
            "spec": self.spec.to_dict(),
            "space_size": self.space_size,
            "accepted": len(self.ok_candidates()),
            "rejected": dict(sorted(rejected.items())),
            "best": self.best.to_dict(),
            "candidates": [c.to_dict() for c in self.all],
        }

    def to_json(self) -> str:
        """Deterministic JSON; wall time is kept out so reports compare byte for byte."""
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def evaluate(
    index: int,
    spec: ConvSpec,
    schedule: Schedule,
    machine: MachineConfig,
    seed: int = 0,
    expected: np.ndarray | None = None,
) -> Candidate:
    """Compile, validate, simulate and score one schedule."""
    try:
        compiled = compile_schedule(spec, schedule, machine)
    except CandidateRejected as exc:
        return Candidate(index, schedule, REJECTED, exc.reason, exc.detail)
    program = compiled.program
    problems = validate(program, machine)
    if problems:
        raise InternalError(f"accepted schedule {schedule.describe()} emitted an invalid program: {problems[:3]}")
    workload = make_workload(spec, seed)
    result = simulate(program, workload, config=machine)
    if expected is None:
        expected = reference_convolve(spec, workload.input, workload.weights).values
    if not np.array_equal(result.output.values, expected):
        raise InternalMiscompile(f"{spec.label} miscompiled under {schedule.describe()}")
    tp = throughput(program, machine)
    moved = tp.load_bytes + tp.store_bytes
    stats = {
        "macs_per_cycle": round(tp.macs_per_cycle, 6),
        "kernel_cycles": tp.kernel_cycles,
        "total_cycles": tp.total_cycles,
        "instructions": program.size,
        "vector_ops": tp.vector_ops,
        "vload_issues": tp.vload_issues,
        "load_bytes": tp.load_bytes,
        "store_bytes": tp.store_bytes,
        "trip_count": program.trip_count,
        "intensity": round(program.total_macs / program.trip_count / moved, 6) if moved else None,
        "checksum": result.output.checksum(),
    }
    return Candidate(index, schedule, OK, stats=stats)


def _evaluate_chunk(args) -> list[Candidate]:
    spec, items, machine, seed, expected = args
    return [evaluate(i, spec, s, machine, seed, expected) for i, s in items]


def tune(
    spec: ConvSpec,
    space: ScheduleSpace | None = None,
    config: MachineConfig | None = None,
    parallelism: int = 1,
    seed: int = 0,
) -> TuneReport:
    """Evaluate every schedule in the pruned space and keep the fastest.

    The report does not depend on ``parallelism``: results are merged by candidate
    index and ties go to fewer instructions, then the smaller schedule encoding.
    """
    space = space or ScheduleSpace()
    config = config or MachineConfig()
    start = time.perf_counter()
    schedules = list(enumerate_space(spec, space, config))
    workload = make_workload(spec, seed)
    expected = reference_convolve(spec, workload.input, workload.weights).values
    items = list(enumerate(schedules))
    if parallelism > 1 and len(items) > 1:
        # contiguous chunks keep neighbouring schedules (which share lowering) in one worker
        n_chunks = min(len(items), parallelism * 4)
        size = -(-len(items) // n_chunks)
        chunks = [items[k : k + size] for k in range(0, len(items), size)]
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            parts = list(pool.map(_evaluate_chunk, [(spec, c, config, seed, expected) for c in chunks]))
        candidates = sorted((c for part in parts for c in part), key=lambda c: c.index)
    else:
        candidates = _evaluate_chunk((spec, items, config, seed, expected))
    ok = [c for c in candidates if c.ok]
    if not ok:
        raise NoCandidates(f"every one of {len(candidates)} schedules for {spec.label} was rejected")
    best = min(ok, key=Candidate.rank_key)
    return TuneReport(spec, best, candidates, len(schedules), time.perf_counter() - start)


def roofline_points(report: TuneReport) -> list[tuple[int, float, float, str]]:
    """(schedule id, MACs per byte moved, MACs/cycle, status) for accepted candidates that move data."""
    points = []
    for c in report.all:
        if not c.ok or not c.stats.get("intensity"):
            continue
        points.append((c.index, c.stats["intensity"], c.macs_per_cycle, c.status))
    return points


def roofline_csv(report: TuneReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schedule_id", "intensity", "macs_per_cycle", "status"])
    for row in roofline_points(report):
        w.writerow(row)
    return buf.getvalue()
