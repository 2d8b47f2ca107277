"""Show why the compiler prunes some schedules, then force one through and let validate object.

    python demos/rejections.py
"""

from __future__ import annotations

from simdconv import CandidateRejected, compile_schedule, validate
from simdconv.conv_model import ConvSpec, Precision
from simdconv.schedule import PAD_EVEN, Schedule

I16, I32 = Precision.I16, Precision.I32

CASES = [
    ("y innermost in memory", ConvSpec(x=16, y=3, r=1, s=1, precision=I32),
     Schedule("xy", "x", 8, layouts={"I": "NCXY"})),
    ("channels innermost", ConvSpec(x=16, y=2, c=8, precision=I16),
     Schedule("xy", "x", 16, layouts={"I": "NYXC"})),
    ("odd filter width, no padding", ConvSpec(x=16, y=2, r=3, s=3, precision=I16),
     Schedule("xy", "x", 16)),
    ("paired weight channels", ConvSpec(x=16, y=2, c=2, k=2, r=3, s=3, precision=I16),
     Schedule("xyk", "x", 16, layouts={"W": "K(C/2)SR(2)"}, pad_filter=PAD_EVEN)),
    ("eight channel pairs live at once", ConvSpec(x=64, y=8, c=8, k=8, r=3, s=3, precision=I16),
     Schedule("xyk", "x", 16, layouts={"I": "N(C/2)YX(2)"}, pad_filter=PAD_EVEN)),
    ("7x7 over 8 channels unrolled 8 rows deep", ConvSpec(x=64, y=8, c=8, k=8, r=7, s=7, precision=I32),
     Schedule("xyk", "x", 8, {"y": 8})),
]


def main() -> None:
    for title, spec, sched in CASES:
        try:
            compile_schedule(spec, sched)
            print(f"{title}: accepted")
            continue
        except CandidateRejected as exc:
            print(f"{title}: {exc.reason}\n    {exc.detail}")
        forced = compile_schedule(spec, sched, checks=False)
        kinds = sorted({v.kind for v in validate(forced.program)})
        print(f"    forced program: {forced.program.size} instructions, validate reports {', '.join(kinds)}")


if __name__ == "__main__":
    main()
