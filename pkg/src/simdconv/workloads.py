"""Catalog of evaluation workloads and the schedules reported as optimal for them."""

from __future__ import annotations

from dataclasses import dataclass

from .conv_model import ConvSpec, Kind, Precision, Variant
from .schedule import Schedule

I16, I32 = Precision.I16, Precision.I32
LANES = {I32: 8, I16: 16}

# 4x3 filter vectorized along x by 16 lanes, 16-bit
RUNNING_EXAMPLE = ConvSpec(x=16, y=1, r=4, s=3, precision=I16)


def running_example_schedule() -> Schedule:
    return Schedule("xy", "x", 16)


# ---------------------------------------------------------------------------
# image-processing filters: 256x16 output, single channel


def image_filter(size: int, precision: Precision, x: int = 256, y: int = 16) -> ConvSpec:
    return ConvSpec(x=x, y=y, r=size, s=size, precision=precision)


# filter size -> precision -> (uj_x, uj_y); loop order xy throughout
IMAGE_FILTER_OPTIMA = {
    2: {I32: (1, 4), I16: (1, 8)},
    3: {I32: (1, 4), I16: (1, 2)},
    4: {I32: (1, 2), I16: (1, 1)},
    5: {I32: (1, 2), I16: (1, 1)},
    6: {I32: (1, 1), I16: (1, 1)},
    7: {I32: (1, 1), I16: (1, 1)},
    8: {I32: (1, 4), I16: (1, 1)},
    9: {I32: (1, 4), I16: (1, 1)},
    10: {I32: (1, 4), I16: (1, 4)},
    11: {I32: (1, 4), I16: (1, 4)},
}

IMAGE_FILTER_MACS = {
    2: 16384, 3: 36864, 4: 65536, 5: 102400, 6: 147456,
    7: 200704, 8: 262144, 9: 331776, 10: 409600, 11: 495616,
}


def image_filter_optimum(size: int, precision: Precision, pad: bool | None = None) -> Schedule:
    """The reported optimum: vector x, loop order xy, reported uj factors.

    16-bit filters with an odd width are padded to an even width, as reported.
    """
    ujx, ujy = IMAGE_FILTER_OPTIMA[size][precision]
    if pad is None:
        pad = precision is I16 and size % 2 == 1
    return Schedule(
        "xy", "x", LANES[precision], {"x": ujx, "y": ujy},
        pad_filter="pad_to_even_columns" if pad else "none",
    )


# ---------------------------------------------------------------------------
# deep-learning layers: 128x2 output, 16 output channels


@dataclass(frozen=True)
class LayerEntry:
    name: str
    spec: ConvSpec
    macs: int
    layouts: dict  # tensor -> layout notation as reported
    vector_loop: str
    sw_loop: str  # recorded only; software pipelining is modelled analytically
    uj: dict
    loop_order: str

    def schedule(self) -> Schedule:
        return Schedule(
            self.loop_order, self.vector_loop, LANES[self.spec.precision], self.uj,
            self.layouts,
        )


def _layer(name, precision, kind, r, s, c, k, macs, o, w, i, vec, sw, uj, order, x=128, y=2) -> LayerEntry:
    spec = ConvSpec(variant=kind, x=x, y=y, k=k, r=r, s=s, c=c, precision=precision)
    return LayerEntry(name, spec, macs, {"O": o, "W": w, "I": i}, vec, sw, dict(zip("xyk", uj)), order)


LAYERS = [
    _layer("REG-3x3", I32, Variant.REG, 3, 3, 8, 16, 294912, "XYK", "(K/8)(C/8)SR(8)(8)", "(C/8)Y'X'(8)", "k", "x", (1, 2, 1), "kyx"),
    _layer("REG-3x3", I16, Variant.REG, 3, 3, 8, 16, 294912, "KYX", "K(C/2)SR(2)", "(C/2)Y'X'(2)", "x", "x", (1, 1, 1), "yxk"),
    _layer("REG-5x5", I32, Variant.REG, 5, 5, 8, 16, 819200, "KYX", "KCSR", "CY'X'", "x", "x", (1, 1, 1), "kyx"),
    _layer("REG-5x5", I16, Variant.REG, 5, 5, 8, 16, 819200, "KYX", "K(C/2)SR(2)", "(C/2)Y'X'(2)", "x", "x", (1, 2, 1), "kyx"),
    _layer("REG-7x7", I32, Variant.REG, 7, 7, 8, 16, 1605632, "KYX", "KCSR", "CY'X'", "x", "x", (1, 2, 1), "kyx"),
    _layer("REG-7x7", I16, Variant.REG, 7, 7, 8, 16, 1605632, "KYX", "K(C/2)SR(2)", "(C/2)Y'X'(2)", "x", "x", (1, 2, 1), "kyx"),
    _layer("PW", I32, Variant.PW, 1, 1, 8, 16, 32768, "XYK", "(K/8)(C/8)SR(8)(8)", "(C/8)Y'X'(8)", "k", "x", (1, 2, 1), "kyx"),
    _layer("PW", I16, Variant.PW, 1, 1, 8, 16, 32768, "YXK", "(K/16)SR(C/2)(16)(2)", "Y'X'C", "k", "k", (1, 2, 1), "xyk"),
    _layer("SS-1x3", I32, Variant.SS, 1, 3, 8, 16, 98304, "XYK", "(K/8)(C/8)SR(8)(8)", "(C/8)Y'X'(8)", "k", "p", (1, 2, 1), "kyx"),
    _layer("SS-1x3", I16, Variant.SS, 1, 3, 8, 16, 98304, "KYX", "K(C/2)SR(2)", "(C/2)Y'X'(2)", "x", "x", (1, 2, 1), "kyx"),
    _layer("SS-3x1", I32, Variant.SS, 3, 1, 8, 16, 98304, "XYK", "(K/8)(C/8)SR(8)(8)", "(C/8)Y'X'(8)", "k", "x", (1, 1, 1), "kyx"),
    _layer("SS-3x1", I16, Variant.SS, 3, 1, 8, 16, 98304, "YXK", "(K/16)SR(C/2)(16)(2)", "Y'X'C", "k", "k", (1, 2, 1), "xyk"),
    _layer("DS", I32, Variant.DS, 3, 3, 1, 16, 36864, "KYX", "KCSR", "CY'X'", "x", "x", (1, 2, 1), "kyx"),
    _layer("DS", I16, Variant.DS, 3, 3, 1, 16, 36864, "KYX", "KCSR", "CY'X'", "x", "x", (1, 2, 1), "kyx"),
    # the reported FC sizes disagree with each other; this keeps the filter and MAC count
    _layer("FC", I32, Variant.FC, 1, 1, 8, 4096, 32768, "XYK", "(K/8)(C/8)SR(8)(8)", "(C/8)Y'X'(8)", "k", "k", (1, 1, 1), "kyx", x=1, y=1),
    _layer("FC", I16, Variant.FC, 1, 1, 8, 4096, 32768, "YXK", "(K/16)SR(C/2)(16)(2)", "Y'X'C", "k", "k", (1, 1, 1), "xyk", x=1, y=1),
]


def layer(name: str, precision: Precision) -> LayerEntry:
    return next(e for e in LAYERS if e.name == name and e.spec.precision is precision)


# ---------------------------------------------------------------------------
# desk-scale workloads for fast end-to-end checks


def desk_workloads() -> list[ConvSpec]:
    """At least 40 small specs covering every kind and variant in both precisions."""
    specs = []
    for p in (I32, I16):
        lanes = LANES[p]
        for f in range(2, 8):
            specs.append(ConvSpec(x=2 * lanes if f % 2 else lanes * 4, y=4, r=f, s=f, precision=p))
        specs.append(ConvSpec(x=lanes * 2, y=2, r=3, s=3, c=4, k=2, precision=p))
        specs.append(ConvSpec(x=lanes, y=4, r=3, s=3, c=2, k=2, stride=2, precision=p))
        specs.append(ConvSpec(variant=Variant.PW, x=lanes, y=2, c=8, k=8, precision=p))
        specs.append(ConvSpec(variant=Variant.PW, x=lanes * 2, y=1, c=4, k=2, precision=p))
        specs.append(ConvSpec(variant=Variant.SS, x=lanes, y=2, r=1, s=3, c=4, k=4, precision=p))
        specs.append(ConvSpec(variant=Variant.SS, x=lanes, y=2, r=3, s=1, c=4, k=4, precision=p))
        specs.append(ConvSpec(variant=Variant.DS, x=lanes, y=4, r=3, s=3, k=4, precision=p))
        specs.append(ConvSpec(variant=Variant.DS, x=lanes * 2, y=2, r=5, s=5, k=2, precision=p))
        specs.append(ConvSpec(variant=Variant.FC, x=1, y=1, r=4, s=4, c=2, k=lanes * 4, precision=p))
        specs.append(ConvSpec(variant=Variant.FC, x=1, y=1, r=2, s=2, c=8, k=lanes * 4, precision=p))
        specs.append(ConvSpec(kind=Kind.CONV3D, x=lanes, y=2, z=2, r=3, s=3, t=3, precision=p))
        specs.append(ConvSpec(kind=Kind.CONV3D, x=lanes, y=2, z=2, r=3, s=3, t=3, c=2, k=2, precision=p))
        specs.append(ConvSpec(kind=Kind.CONV1D, x=lanes * 4, r=5, c=2, k=2, precision=p))
        specs.append(ConvSpec(x=lanes, y=2, r=2, s=2, n=2, c=2, k=2, precision=p))
    return specs
