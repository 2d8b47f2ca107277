"""End-to-end compilation of one (spec, schedule) pair, keeping every intermediate stage."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

from .codegen import VProgram, emit
from .config import MachineConfig
from .conv_model import ConvSpec
from .fusion import FusedOp, fuse
from .lowering import GroupedBody, TripletBody, lazy_store_group, lower
from .reuse import RegisterPlan, plan_loads
from .schedule import PaddedSpec, Schedule, TensorStorage, apply_padding, check_schedule, plan_storage


@dataclass
class Compiled:
    spec: ConvSpec
    schedule: Schedule
    padded: PaddedSpec
    storages: dict[str, TensorStorage]
    body: TripletBody
    grouped: GroupedBody
    plan: RegisterPlan
    fused: list[list[FusedOp]]
    program: VProgram


@lru_cache(maxsize=64)
def _lowered(padded: PaddedSpec, schedule: Schedule) -> tuple[TripletBody, GroupedBody]:
    body = lower(padded, schedule)
    return body, lazy_store_group(body)


def _lowering_key(schedule: Schedule) -> Schedule:
    """Lowering reads only the input layout, so candidates differing elsewhere share it."""
    return replace(schedule, layouts=(("I", schedule.layout("I")),))


def compile_schedule(
    spec: ConvSpec,
    schedule: Schedule,
    machine: MachineConfig | None = None,
    checks: bool = True,
    interleave: bool = True,
) -> Compiled:
    """Run lowering through codegen. With ``checks=False`` every feasibility test is
    skipped and the program is emitted anyway, so the violation can be observed."""
    machine = machine or MachineConfig()
    check_schedule(spec, schedule, machine)
    padded = apply_padding(spec, schedule, machine)
    storages = plan_storage(padded, schedule, machine)
    body, grouped = _lowered(padded, _lowering_key(schedule))
    plan = plan_loads(grouped, storages, machine, checks)
    fused = fuse(grouped, plan, machine, checks)
    program = emit(fused, plan, grouped, storages, machine, spec=spec, interleave=interleave, checks=checks)
    return Compiled(spec, schedule, padded, storages, body, grouped, plan, fused, program)
