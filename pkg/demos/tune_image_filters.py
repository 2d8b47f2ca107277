"""Tune single-channel image filters and compare against the catalogued optima.

    python demos/tune_image_filters.py [--x 64] [--y 16] [--sizes 2 3 4 5]
"""

from __future__ import annotations

import argparse

from simdconv.autotuner import evaluate, tune
from simdconv.config import MachineConfig
from simdconv.schedule import ScheduleSpace
from simdconv.workloads import I16, I32, image_filter, image_filter_optimum


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--x", type=int, default=64)
    ap.add_argument("--y", type=int, default=16)
    ap.add_argument("--sizes", type=int, nargs="+", default=[2, 3, 4, 5])
    args = ap.parse_args()

    machine = MachineConfig()
    print(f"{'filter':>7} {'prec':>4} {'space':>5} {'best':>7} {'optimum':>8} {'ratio':>6}  best schedule")
    for size in args.sizes:
        for p in (I32, I16):
            spec = image_filter(size, p, x=args.x, y=args.y)
            report = tune(spec, ScheduleSpace(), machine)
            opt = evaluate(0, spec, image_filter_optimum(size, p), machine)
            best = report.best.macs_per_cycle
            print(
                f"{size}x{size:<5} {p.value:>4} {report.space_size:>5} {best:7.2f} "
                f"{opt.macs_per_cycle:8.2f} {opt.macs_per_cycle / best:6.3f}  {report.best.schedule.describe()}"
            )


if __name__ == "__main__":
    main()
