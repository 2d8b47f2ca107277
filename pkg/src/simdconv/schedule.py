"""Schedules, schedule spaces, filter padding and the blocked-layout address algebra."""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np

from .config import MachineConfig
from .conv_model import TENSOR_DIMS, ConvSpec, Kind, Precision, with_padded_filter
from .errors import INVALID_SCHEDULE, CandidateRejected, InvalidSpec, NoCandidates, OutOfBounds

NO_PAD = "none"
PAD_EVEN = "pad_to_even_columns"

LOOP_DIMS = ("n", "k", "z", "y", "x")


# ---------------------------------------------------------------------------
# data layouts


@dataclass(frozen=True)
class DataLayout:
    """Ordered (dim, block) terms from outermost to innermost.

    ``block is None`` is a full term: the whole extent of the dim, or what remains
    of it after its block term has been factored out.
    """

    terms: tuple[tuple[str, int | None], ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((d, b) for d, b in self.terms))
        full, blocked = set(), set()
        for dim, block in self.terms:
            seen = blocked if block is not None else full
            if dim in seen:
                raise InvalidSpec(f"dim {dim!r} repeated in layout {self}")
            if block is not None and block < 1:
                raise InvalidSpec("block sizes must be positive")
            seen.add(dim)

    @classmethod
    def parse(cls, text: str) -> "DataLayout":
        """Parse notation such as ``KCSR``, ``(C/2)Y'X'(2)`` or ``(K/16)SR(C/2)(16)(2)``.

        A bare ``(b)`` closes the most recently opened ``(D/b)`` of the same size, so
        ``(K/8)(C/8)SR(8)(8)`` nests as ``...(c:8)(k:8)``. ``(C:8)`` names the dim
        explicitly.
        """
        terms: list[tuple[str, int | None]] = []
        pending: list[tuple[str, int]] = []
        pos = 0
        text = text.replace(" ", "")
        pattern = r"\(([A-Za-z])'?/(\d+)\)|\(([A-Za-z])'?:(\d+)\)|\((\d+)\)|([A-Za-z])'?"
        while pos < len(text):
            m = re.match(pattern, text[pos:])
            if not m:
                raise InvalidSpec(f"cannot parse layout {text!r} at {pos}")
            if m.group(1):
                dim = m.group(1).lower()
                terms.append((dim, None))
                pending.append((dim, int(m.group(2))))
            elif m.group(3):
                dim, size = m.group(3).lower(), int(m.group(4))
                if (dim, size) not in pending:
                    raise InvalidSpec(f"block ({dim}:{size}) has no matching full term in {text!r}")
                pending.remove((dim, size))
                terms.append((dim, size))
            elif m.group(5):
                size = int(m.group(5))
                match = next((p for p in reversed(pending) if p[1] == size), None)
                if match is None:
                    raise InvalidSpec(f"block ({size}) has no matching (D/{size}) in {text!r}")
                pending.remove(match)
                terms.append((match[0], size))
            else:
                terms.append((m.group(6).lower(), None))
            pos += m.end()
        if pending:
            raise InvalidSpec(f"unmatched blocked dims {pending} in {text!r}")
        return cls(tuple(terms))

    @classmethod
    def coerce(cls, value) -> "DataLayout":
        if isinstance(value, DataLayout):
            return value
        if isinstance(value, str):
            return cls.parse(value)
        return cls(tuple((str(d), None if b is None else int(b)) for d, b in value))

    def blocks(self) -> dict[str, int]:
        return {d: b for d, b in self.terms if b is not None}

    def dims(self) -> set[str]:
        return {d for d, _ in self.terms}

    def normalized(self, tensor_dims: Sequence[str]) -> "DataLayout":
        """Add missing dims as outermost full terms (canonical order) and give every
        blocked dim a full term."""
        unknown = self.dims() - set(tensor_dims)
        if unknown:
            raise InvalidSpec(f"layout {self} names dims {sorted(unknown)} not in {tensor_dims}")
        full = {d for d, b in self.terms if b is None}
        missing = [d for d in tensor_dims if d not in full]
        return DataLayout(tuple((d, None) for d in missing) + self.terms)

    def to_json(self) -> list:
        return [[d, b] for d, b in self.terms]

    def __str__(self) -> str:
        blocks = self.blocks()
        out = []
        opened: list[tuple[str, int]] = []
        for d, b in self.terms:
            if b is not None:
                latest = next((p for p in reversed(opened) if p[1] == b), None)
                out.append(f"({b})" if latest == (d, b) else f"({d.upper()}:{b})")
                opened.remove((d, b))
            elif d in blocks:
                out.append(f"({d.upper()}/{blocks[d]})")
                opened.append((d, blocks[d]))
            else:
                out.append(d.upper())
        return "".join(out)


CANONICAL = {t: DataLayout(tuple((d, None) for d in dims)) for t, dims in TENSOR_DIMS.items()}


def _term_sizes(layout: DataLayout, extents: Mapping[str, int]) -> list[int]:
    blocks = layout.blocks()
    sizes = []
    for dim, block in layout.terms:
        extent = extents[dim]
        if block is not None:
            sizes.append(block)
        elif dim in blocks:
            if extent % blocks[dim]:
                raise InvalidSpec(f"block {blocks[dim]} does not divide extent {extent} of {dim}")
            sizes.append(extent // blocks[dim])
        else:
            sizes.append(extent)
    return sizes


def _term_strides(sizes: Sequence[int]) -> list[int]:
    strides = [1] * len(sizes)
    for i in range(len(sizes) - 2, -1, -1):
        strides[i] = strides[i + 1] * sizes[i + 1]
    return strides


def layout_address(layout: DataLayout, coords: Mapping[str, int], extents: Mapping[str, int]) -> int:
    """Linear element offset of ``coords`` under a blocked, permuted layout.

    Dims of ``coords`` not named by the layout must have coordinate 0.
    """
    full_extents = {d: extents.get(d, 1) for d in layout.dims()}
    for dim, v in coords.items():
        if dim not in full_extents:
            if v != 0:
                raise OutOfBounds(f"{dim}={v} not addressed by layout {layout}")
            continue
        if not 0 <= v < full_extents[dim]:
            raise OutOfBounds(f"{dim}={v} outside [0, {full_extents[dim]})")
    return _raw_address(layout, coords, full_extents)


def _raw_address(layout: DataLayout, coords: Mapping[str, int], extents: Mapping[str, int]) -> int:
    sizes = _term_sizes(layout, extents)
    strides = _term_strides(sizes)
    blocks = layout.blocks()
    addr = 0
    for (dim, block), stride in zip(layout.terms, strides):
        v = coords.get(dim, 0)
        if block is not None:
            idx = v % block
        elif dim in blocks:
            idx = v // blocks[dim]
        else:
            idx = v
        addr += idx * stride
    return addr


@dataclass(frozen=True)
class TensorStorage:
    """How one tensor sits in memory: normalized layout over padded storage extents."""

    name: str
    layout: DataLayout
    extents: tuple[tuple[str, int], ...]  # storage extents, canonical dim order
    logical: tuple[int, ...]  # logical (unpadded) extents, canonical dim order
    elem_bytes: int

    @cached_property
    def extent_map(self) -> dict[str, int]:
        return dict(self.extents)

    @cached_property
    def _strides(self) -> list[int]:
        return _term_strides(_term_sizes(self.layout, self.extent_map))

    @property
    def volume(self) -> int:
        return math.prod(e for _, e in self.extents)

    @property
    def nbytes(self) -> int:
        return self.volume * self.elem_bytes

    def address(self, coords: Mapping[str, int]) -> int:
        return layout_address(self.layout, coords, self.extent_map)

    @cached_property
    def _blocks(self) -> dict[str, int]:
        return self.layout.blocks()

    def raw_address(self, coords: Mapping[str, int]):
        """Element offset ignoring bounds; coordinates may be numpy arrays."""
        blocks = self._blocks
        addr = 0
        for (dim, block), stride in zip(self.layout.terms, self._strides):
            v = coords.get(dim, 0)
            if block is not None:
                addr += (v % block) * stride
            elif dim in blocks:
                addr += (v // blocks[dim]) * stride
            else:
                addr += v * stride
        return addr

    def address_grid(self, shape: Sequence[int]) -> np.ndarray:
        """Element offsets of every coordinate of a canonical array of ``shape``."""
        dims = [d for d, _ in self.extents]
        grids = np.meshgrid(*[np.arange(e) for e in shape], indexing="ij")
        blocks = self.layout.blocks()
        addr = np.zeros(tuple(shape), dtype=np.int64)
        for (dim, block), stride in zip(self.layout.terms, self._strides):
            v = grids[dims.index(dim)]
            if block is not None:
                addr += (v % block) * stride
            elif dim in blocks:
                addr += (v // blocks[dim]) * stride
            else:
                addr += v * stride
        return addr


def storage_for(
    name: str, layout: DataLayout, logical: Mapping[str, int], precision: Precision, alignment: int = 16
) -> TensorStorage:
    """Pad extents so every block divides its dim and every stride outside the innermost
    non-trivial full term is a multiple of ``alignment`` bytes."""
    dims = TENSOR_DIMS[name]
    layout = layout.normalized(dims)
    eb = precision.nbytes
    ext = {d: logical[d] for d in dims}
    blocks = layout.blocks()
    for d, b in blocks.items():
        ext[d] = -(-ext[d] // b) * b
    sizes = _term_sizes(layout, ext)
    # innermost full term whose dim is not trivially 1
    pick = None
    for i in range(len(layout.terms) - 1, -1, -1):
        dim, block = layout.terms[i]
        if block is None and ext[dim] > 1:
            pick = i
            break
    if pick is None:
        pick = max(i for i, (_, b) in enumerate(layout.terms) if b is None)
    inner_bytes = math.prod(sizes[pick + 1 :]) * eb
    quantum = alignment // math.gcd(alignment, inner_bytes)
    dim, _ = layout.terms[pick]
    count = -(-sizes[pick] // quantum) * quantum
    ext[dim] = count * blocks.get(dim, 1)
    return TensorStorage(
        name=name,
        layout=layout,
        extents=tuple((d, ext[d]) for d in dims),
        logical=tuple(logical[d] for d in dims),
        elem_bytes=eb,
    )


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class Loop:
    name: str
    trips: int
    step: int


@dataclass(frozen=True)
class Schedule:
    loop_order: str  # innermost loop first, e.g. "xy" means ``for y: for x:``
    vector_loop: str
    lanes: int
    uj: tuple[tuple[str, int], ...] = ()
    layouts: tuple[tuple[str, DataLayout], ...] = ()
    pad_filter: str = NO_PAD

    def __post_init__(self):
        uj = self.uj.items() if isinstance(self.uj, Mapping) else self.uj
        uj = tuple(sorted((str(d), int(f)) for d, f in uj if int(f) != 1))
        object.__setattr__(self, "uj", uj)
        lay = self.layouts.items() if isinstance(self.layouts, Mapping) else self.layouts
        lay = tuple(sorted((t, DataLayout.coerce(v)) for t, v in lay))
        lay = tuple((t, l) for t, l in lay if l != CANONICAL.get(t))
        object.__setattr__(self, "layouts", lay)
        if self.pad_filter not in (NO_PAD, PAD_EVEN):
            raise InvalidSpec(f"unknown pad_filter {self.pad_filter!r}")
        if len(set(self.loop_order)) != len(self.loop_order) or set(self.loop_order) - set(LOOP_DIMS):
            raise InvalidSpec(f"bad loop order {self.loop_order!r}")
        if self.vector_loop not in LOOP_DIMS:
            raise InvalidSpec(f"bad vector loop {self.vector_loop!r}")

    def uj_factor(self, dim: str) -> int:
        return dict(self.uj).get(dim, 1)

    def layout(self, tensor: str) -> DataLayout:
        return dict(self.layouts).get(tensor, CANONICAL[tensor])

    def loops_outer_to_inner(self) -> list[str]:
        named = list(reversed(self.loop_order))
        rest = [d for d in LOOP_DIMS if d not in named]
        return rest + named

    def to_dict(self) -> dict:
        return {
            "loop_order": self.loop_order,
            "vector_loop": self.vector_loop,
            "lanes": self.lanes,
            "uj": dict(self.uj),
            "layouts": {t: l.to_json() for t, l in self.layouts},
            "pad_filter": self.pad_filter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(
            loop_order=d["loop_order"],
            vector_loop=d["vector_loop"],
            lanes=int(d["lanes"]),
            uj=d.get("uj", {}),
            layouts={t: DataLayout.coerce(v) for t, v in d.get("layouts", {}).items()},
            pad_filter=d.get("pad_filter", NO_PAD),
        )

    def encode(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def describe(self) -> str:
        uj = ",".join(f"{d}{f}" for d, f in self.uj) or "-"
        lay = " ".join(f"{t}:{l}" for t, l in self.layouts) or "canonical"
        pad = " pad" if self.pad_filter == PAD_EVEN else ""
        return f"order={self.loop_order} vec={self.vector_loop}x{self.lanes} uj={uj} {lay}{pad}"


def loop_extent(spec: ConvSpec, dim: str) -> int:
    return getattr(spec, dim)


def residual_loops(spec: ConvSpec, schedule: Schedule) -> list[Loop]:
    """All output loops, outermost first, with trip counts after vectorization and
    unroll-and-jam. Loops may have a single trip."""
    loops = []
    for dim in schedule.loops_outer_to_inner():
        unit = schedule.lanes if dim == schedule.vector_loop else 1
        step = unit * schedule.uj_factor(dim)
        loops.append(Loop(dim, loop_extent(spec, dim) // step, step))
    return loops


def check_schedule(spec: ConvSpec, schedule: Schedule, machine: MachineConfig) -> None:
    lanes = machine.lanes(spec.precision)
    if schedule.lanes != lanes:
        raise CandidateRejected(INVALID_SCHEDULE, f"lanes {schedule.lanes} != machine lanes {lanes}")
    vext = loop_extent(spec, schedule.vector_loop)
    if vext < lanes:
        raise CandidateRejected(INVALID_SCHEDULE, f"vector loop extent {vext} < {lanes} lanes")
    for dim in LOOP_DIMS:
        unit = lanes if dim == schedule.vector_loop else 1
        step = unit * schedule.uj_factor(dim)
        if loop_extent(spec, dim) % step:
            raise CandidateRejected(
                INVALID_SCHEDULE, f"step {step} does not divide extent {loop_extent(spec, dim)} of {dim}"
            )


# ---------------------------------------------------------------------------
# padding


@dataclass(frozen=True)
class PaddedSpec:
    spec: ConvSpec  # spec the compiler works on (possibly wider filter)
    original: ConvSpec
    zero_fill: tuple[tuple[str, str, int, int], ...] = ()  # (tensor, dim, from, to)

    @property
    def real_r(self) -> int:
        return self.original.r


def apply_padding(spec: ConvSpec, schedule: Schedule, machine: MachineConfig) -> PaddedSpec:
    """Append zero filter columns until the per-row fusible count fills the datapath."""
    cols = machine.columns(spec.precision)
    if schedule.pad_filter != PAD_EVEN or cols == 1 or spec.r % cols == 0:
        return PaddedSpec(spec, spec)
    r_pad = -(-spec.r // cols) * cols
    return PaddedSpec(with_padded_filter(spec, r_pad), spec, (("W", "r", spec.r, r_pad),))


def plan_storage(padded: PaddedSpec, schedule: Schedule, machine: MachineConfig) -> dict[str, TensorStorage]:
    spec = padded.spec
    return {
        t: storage_for(t, schedule.layout(t), spec.extents(t), spec.precision, machine.alignment_bytes)
        for t in ("I", "W", "O")
    }


# ---------------------------------------------------------------------------
# schedule spaces


def _layouts_2d(kind: Kind, two_d: str, three_d: str) -> str:
    return three_d if kind is Kind.CONV3D else two_d


def layout_signature(layout: DataLayout, extents: Mapping[str, int]) -> tuple:
    """Terms that actually order memory: full terms of extent-1 dims place nothing."""
    full = layout.normalized(tuple(extents))
    return tuple((d, b) for d, b in full.terms if b is not None or extents[d] > 1)


def distinct_layouts(
    spec: ConvSpec, tensor: str, layouts: Sequence[DataLayout]
) -> tuple[DataLayout, ...]:
    """Drop layouts that place every element where an earlier one does; a layout
    equivalent to the canonical one is replaced by it."""
    ext = spec.extents(tensor)
    canon = layout_signature(CANONICAL[tensor], ext)
    out: list[DataLayout] = []
    seen: set[tuple] = set()
    for layout in layouts:
        sig = layout_signature(layout, ext)
        if sig in seen:
            continue
        seen.add(sig)
        out.append(CANONICAL[tensor] if sig == canon else layout)
    return tuple(out)


def default_layout_candidates(spec: ConvSpec, machine: MachineConfig) -> dict[str, tuple[DataLayout, ...]]:
    k3 = spec.kind
    cols = machine.columns(spec.precision)
    lanes = machine.lanes(spec.precision)
    inp = [_layouts_2d(k3, "NCYX", "NCZYX"), _layouts_2d(k3, "NYXC", "NZYXC")]
    wts = [_layouts_2d(k3, "KCSR", "KCTSR"), _layouts_2d(k3, "CSRK", "CTSRK")]
    out = [_layouts_2d(k3, "NKYX", "NKZYX"), _layouts_2d(k3, "NYXK", "NZYXK")]
    if cols > 1 and spec.in_c % cols == 0:
        inp.append(_layouts_2d(k3, f"N(C/{cols})YX({cols})", f"N(C/{cols})ZYX({cols})"))
    if cols > 1 and spec.c % cols == 0 and spec.c > 1:
        wts.append(_layouts_2d(k3, f"K(C/{cols})SR({cols})", f"K(C/{cols})TSR({cols})"))
        if spec.k % lanes == 0:
            wts.append(
                _layouts_2d(
                    k3,
                    f"(K/{lanes})SR(C/{cols})({lanes})({cols})",
                    f"(K/{lanes})TSR(C/{cols})({lanes})({cols})",
                )
            )
    if cols == 1 and spec.in_c % lanes == 0 and spec.in_c > 1:
        inp.append(_layouts_2d(k3, f"N(C/{lanes})YX({lanes})", f"N(C/{lanes})ZYX({lanes})"))
        if spec.k % lanes == 0 and spec.c % lanes == 0:
            wts.append(
                _layouts_2d(
                    k3,
                    f"(K/{lanes})(C/{lanes})SR({lanes})({lanes})",
                    f"(K/{lanes})(C/{lanes})TSR({lanes})({lanes})",
                )
            )
    return {
        t: distinct_layouts(spec, t, [DataLayout.parse(s) for s in texts])
        for t, texts in (("I", inp), ("W", wts), ("O", out))
    }


@dataclass(frozen=True)
class ScheduleSpace:
    uj_candidates: tuple[int, ...] = (1, 2, 4, 8)
    loop_orders: tuple[str, ...] | None = None  # None: every order of the non-trivial loops
    vector_loop_candidates: tuple[str, ...] | None = None  # None: loops with extent >= lanes
    layout_candidates: dict | None = None  # tensor -> layouts; None: defaults
    pad_candidates: tuple[str, ...] | None = None  # None: both when padding changes anything
    max_program_ops: int = 2048
    max_uj_product: int | None = 8

    def __post_init__(self):
        if not self.uj_candidates:
            raise InvalidSpec("uj_candidates must be non-empty")
        for name in ("loop_orders", "vector_loop_candidates", "pad_candidates"):
            v = getattr(self, name)
            if v is not None:
                if not v:
                    raise InvalidSpec(f"{name} must be non-empty")
                object.__setattr__(self, name, tuple(v))
        if self.layout_candidates is not None:
            lc = {t: tuple(DataLayout.coerce(l) for l in ls) for t, ls in self.layout_candidates.items()}
            if any(not ls for ls in lc.values()):
                raise InvalidSpec("layout candidate lists must be non-empty")
            object.__setattr__(self, "layout_candidates", lc)
        object.__setattr__(self, "uj_candidates", tuple(sorted(set(self.uj_candidates))))

    def to_dict(self) -> dict:
        return {
            "uj_candidates": list(self.uj_candidates),
            "loop_orders": None if self.loop_orders is None else list(self.loop_orders),
            "vector_loop_candidates": None
            if self.vector_loop_candidates is None
            else list(self.vector_loop_candidates),
            "layout_candidates": None
            if self.layout_candidates is None
            else {t: [l.to_json() for l in ls] for t, ls in self.layout_candidates.items()},
            "pad_candidates": None if self.pad_candidates is None else list(self.pad_candidates),
            "max_program_ops": self.max_program_ops,
            "max_uj_product": self.max_uj_product,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleSpace":
        d = dict(d)
        for key in ("uj_candidates", "loop_orders", "vector_loop_candidates", "pad_candidates"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def estimated_ops(spec: ConvSpec, schedule: Schedule, machine: MachineConfig) -> int:
    """Program-size proxy: fused vector ops plus one store per output group."""
    padded = apply_padding(spec, schedule, machine).spec
    replicas = math.prod(f for _, f in schedule.uj)
    rows = padded.r * padded.s * padded.t * padded.c * replicas
    return -(-rows // machine.columns(spec.precision)) + replicas


def enumerate_space(spec: ConvSpec, space: ScheduleSpace, machine: MachineConfig) -> Iterator[Schedule]:
    """Yield every schedule of ``space`` that survives pruning, in a fixed order."""
    lanes = machine.lanes(spec.precision)
    cols = machine.columns(spec.precision)
    nontrivial = [d for d in LOOP_DIMS if loop_extent(spec, d) > 1]
    vloops = space.vector_loop_candidates
    if vloops is None:
        vloops = tuple(d for d in ("x", "k", "y", "z", "n") if loop_extent(spec, d) >= lanes)
    orders = space.loop_orders
    if orders is None:
        inner_first = list(reversed(nontrivial))
        orders = tuple("".join(p) for p in itertools.permutations(inner_first)) or ("x",)
    layouts = default_layout_candidates(spec, machine)
    if space.layout_candidates is not None:
        layouts.update({t: distinct_layouts(spec, t, ls) for t, ls in space.layout_candidates.items()})
    pads = space.pad_candidates
    if pads is None:
        pads = (NO_PAD, PAD_EVEN) if cols > 1 and spec.r % cols else (NO_PAD,)

    seen: set[Schedule] = set()
    count = 0
    for vloop in vloops:
        if loop_extent(spec, vloop) < lanes:
            continue
        per_dim = []
        for dim in LOOP_DIMS:
            unit = lanes if dim == vloop else 1
            ext = loop_extent(spec, dim)
            if ext % unit:
                per_dim = None
                break
            trips = ext // unit
            per_dim.append([f for f in space.uj_candidates if trips % f == 0] or [1])
        if per_dim is None:
            continue
        for factors in itertools.product(*per_dim):
            if space.max_uj_product is not None and math.prod(factors) > space.max_uj_product:
                continue
            uj = dict(zip(LOOP_DIMS, factors))
            for order in orders:
                for li, lw, lo in itertools.product(layouts["I"], layouts["W"], layouts["O"]):
                    for pad in pads:
                        sched = Schedule(order, vloop, lanes, uj, {"I": li, "W": lw, "O": lo}, pad)
                        if sched in seen:
                            continue
                        seen.add(sched)
                        if estimated_ops(spec, sched, machine) > space.max_program_ops:
                            continue
                        count += 1
                        yield sched
    if count == 0:
        raise NoCandidates(f"no schedule survives pruning for {spec.label}")


def space_list(spec: ConvSpec, space: ScheduleSpace, machine: MachineConfig) -> list[Schedule]:
    return list(enumerate_space(spec, space, machine))
