"""Walk a 4x3 16-bit filter through every compiler stage and run it on the simulator.

    python demos/running_example.py
"""

from __future__ import annotations

import numpy as np

from simdconv import compile_schedule, make_workload, reference_convolve, simulate, throughput
from simdconv.codegen import render_text
from simdconv.conv_model import ConvSpec, Precision
from simdconv.fusion import dump_fused
from simdconv.schedule import Schedule
from simdconv.workloads import RUNNING_EXAMPLE, running_example_schedule


def stage(title: str) -> None:
    print(f"\n== {title}")


def main() -> None:
    compiled = compile_schedule(RUNNING_EXAMPLE, running_example_schedule())

    stage("triplet rows: one 1D vector MAC per filter tap")
    print(compiled.body.dump(), end="")

    stage("register plan: twelve input accesses coalesce into three row loads")
    print(compiled.plan.dump(), end="")

    stage("fused ops: pairs of taps share one 16x2 datapath instruction")
    print(dump_fused(compiled.fused, compiled.grouped), end="")

    stage("program")
    print(render_text(compiled.program), end="")

    w = make_workload(RUNNING_EXAMPLE, seed=1)
    out = simulate(compiled.program, w).output
    ref = reference_convolve(RUNNING_EXAMPLE, w.input, w.weights)
    print("oracle:", "MATCH" if np.array_equal(out.values, ref.values) else "MISMATCH")

    # a wider image puts x and y in loops: weights are hoisted and rows reload per trip
    stage("the same filter over a 64x4 image")
    looped = ConvSpec(x=64, y=4, r=4, s=3, precision=Precision.I16)
    program = compile_schedule(looped, Schedule("xy", "x", 16)).program
    print(render_text(program), end="")
    tp = throughput(program)
    print(
        f"kernel {tp.kernel_cycles} cycles/trip ({tp.vload_issues} load issues, {tp.vector_ops} vector ops), "
        f"{tp.total_cycles} cycles total, {tp.macs_per_cycle:.2f} MACs/cycle"
    )


if __name__ == "__main__":
    main()
