"""Vectorizing compiler, simulator and auto-tuner for convolutions on a 2D-SIMD VLIW machine."""

from __future__ import annotations

from .autotuner import Candidate, TuneReport, evaluate, roofline_csv, tune
from .codegen import VProgram, emit, parse_text, render_c, render_text
from .config import MachineConfig
from .conv_model import (
    ConvSpec,
    Kind,
    Precision,
    TensorData,
    Variant,
    Workload,
    make_workload,
    reference_convolve,
    total_macs,
)
from .errors import CandidateRejected, InternalMiscompile, NoCandidates, SelectInfeasible, SimdConvError
from .fusion import FusedOp, SelectPattern, fuse, solve_select
from .lowering import GroupedBody, TripletBody, lazy_store_group, lower
from .machine import SimResult, Throughput, simulate, throughput, validate
from .pipeline import Compiled, compile_schedule
from .reuse import RegisterPlan, build_reuse_graph, coalesce, plan_loads
from .schedule import DataLayout, Schedule, ScheduleSpace, enumerate_space

__all__ = [
    "Candidate", "Compiled", "ConvSpec", "CandidateRejected", "DataLayout", "FusedOp", "GroupedBody",
    "InternalMiscompile", "Kind", "MachineConfig", "NoCandidates", "Precision", "RegisterPlan",
    "Schedule", "ScheduleSpace", "SelectInfeasible", "SelectPattern", "SimResult", "SimdConvError",
    "TensorData", "Throughput", "TripletBody", "TuneReport", "VProgram", "Variant", "Workload",
    "build_reuse_graph", "coalesce", "compile_schedule", "emit", "enumerate_space", "evaluate", "fuse",
    "lazy_store_group", "lower", "make_workload", "parse_text", "plan_loads", "reference_convolve",
    "render_c", "render_text", "roofline_csv", "simulate", "solve_select", "throughput", "total_macs",
    "tune", "validate",
]
