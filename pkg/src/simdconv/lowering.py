"""Lowering of a convolution + schedule into the triplet loop-body IR, and lazy-store grouping."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

from .conv_model import TENSOR_DIMS, ConvSpec, Variant
from .errors import InternalError
from .schedule import Loop, PaddedSpec, Schedule, residual_loops

VECTOR = "vector"
SCALAR = "scalar"


@dataclass(frozen=True)
class DimIndex:
    """Affine index ``const + sum(coeff * iv) + lane * i`` along one tensor dim.

    Induction variables hold the coordinate of the loop's first point, so a loop
    with step ``st`` advances its contribution by ``coeff * st`` per trip.
    """

    dim: str
    const: int = 0
    ivs: tuple[tuple[str, int], ...] = ()
    lane: int = 0

    def at(self, env: dict[str, int], lane: int = 0) -> int:
        return self.const + sum(c * env.get(v, 0) for v, c in self.ivs) + self.lane * lane


@dataclass(frozen=True)
class VectorAccess:
    tensor: str
    kind: str
    index: tuple[DimIndex, ...]  # canonical dim order of the tensor
    lane_count: int

    def __post_init__(self):
        lane_dims = [d.dim for d in self.index if d.lane]
        if len(lane_dims) > 1:
            raise InternalError(f"lane term on several dims {lane_dims}")
        if self.kind == SCALAR and (self.lane_count != 1 or lane_dims):
            raise InternalError("scalar access with lanes")

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.tensor, self.kind, self.index, self.lane_count))
            object.__setattr__(self, "_hash", h)
        return h

    def __getstate__(self) -> dict:
        # string hashes differ between processes, so the cached value must not travel
        return {k: v for k, v in self.__dict__.items() if k != "_hash"}

    def coords(self, env: dict[str, int], lane: int = 0) -> dict[str, int]:
        return {d.dim: d.at(env, lane) for d in self.index}

    def lane_dim(self) -> str | None:
        return next((d.dim for d in self.index if d.lane), None)

    def render(self, extents: dict[str, int] | None = None) -> str:
        """Table-style text such as ``I(x+1:x+16, y)`` or ``W(0, 0)``.

        The two leading dims always print; the others are left out when they have
        extent 1, or (without ``extents``) when their index is the constant 0.
        """
        order = {"O": "xyzkn", "I": "xyzcn", "W": "rstck"}[self.tensor]
        parts = []
        for pos, name in enumerate(order):
            d = next(i for i in self.index if i.dim == name)
            if pos >= 2:
                if extents is not None and extents.get(name, 1) == 1:
                    continue
                if extents is None and not (d.const or d.ivs or d.lane):
                    continue
            lo = _expr(d.const, d.ivs)
            if d.lane:
                hi = _expr(d.const + d.lane * (self.lane_count - 1), d.ivs)
                step = f":{d.lane}" if d.lane != 1 else ""
                parts.append(f"{lo}:{hi}{step}")
            else:
                parts.append(lo)
        return f"{self.tensor}({', '.join(parts) or '0'})"


def _expr(const: int, ivs) -> str:
    terms = [(v if c == 1 else f"{c}{v}") for v, c in ivs if c]
    text = "+".join(terms)
    if const or not text:
        text = f"{text}+{const}" if text and const > 0 else f"{text}{const}"
    return text


@dataclass(frozen=True)
class TripletRow:
    update: VectorAccess
    op1: VectorAccess  # weight
    op2: VectorAccess  # input
    real: bool = True  # False for MACs against zero filter columns added by padding


@dataclass(frozen=True)
class TripletBody:
    rows: tuple[TripletRow, ...]
    loops: tuple[Loop, ...]  # residual loops, outermost first
    spec: ConvSpec  # post-padding spec
    lanes: int
    vector_loop: str

    def dump(self) -> str:
        return _table(
            ("update", "operand1", "operand2"),
            [(r.update.render(self._ext("O")), r.op1.render(self._ext("W")), r.op2.render(self._ext("I")))
             for r in self.rows],
        )

    def _ext(self, t: str) -> dict[str, int]:
        return self.spec.extents(t)


@dataclass(frozen=True)
class Group:
    update: VectorAccess
    macs: tuple[TripletRow, ...]


@dataclass(frozen=True)
class GroupedBody:
    groups: tuple[Group, ...]
    loops: tuple[Loop, ...]
    spec: ConvSpec
    lanes: int
    vector_loop: str

    @property
    def row_count(self) -> int:
        return sum(len(g.macs) for g in self.groups)

    def rows(self) -> list[TripletRow]:
        return [r for g in self.groups for r in g.macs]

    def dump(self) -> str:
        eo, ew, ei = (self.spec.extents(t) for t in "OWI")
        lines = []
        for gi, g in enumerate(self.groups):
            for j, r in enumerate(g.macs):
                lead = f"G{gi} {g.update.render(eo)}" if j == 0 else ""
                lines.append((lead, r.op1.render(ew), r.op2.render(ei)))
        return _table(("group/update", "operand1", "operand2"), lines)


def _table(header, rows) -> str:
    rows = [tuple(header)] + [tuple(r) for r in rows]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    out = [" | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    out.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------


_INPUT_TO_REDUCTION = {"x": "r", "y": "s", "z": "t", "c": "c"}


def reduction_points(spec: ConvSpec, schedule: Schedule) -> list[dict[str, int]]:
    """Every (c, t, s, r) point, ordered by the input layout so consecutive rows walk memory."""
    extents = {"c": spec.c, "t": spec.t, "s": spec.s, "r": spec.r}
    ds = spec.variant is Variant.DS
    layout = schedule.layout("I").normalized(TENSOR_DIMS["I"])
    blocks = layout.blocks()
    levels: list[tuple[str, int, int]] = []  # (reduction dim, size, weight)
    mentioned = set()
    for dim, block in layout.terms:
        red = _INPUT_TO_REDUCTION.get(dim)
        if red is None or (ds and red == "c"):
            continue
        mentioned.add(red)
        ext = extents[red]
        if block is not None:
            levels.append((red, block, 1))
        elif dim in blocks:
            b = blocks[dim]
            levels.append((red, -(-ext // b), b))
        else:
            levels.append((red, ext, 1))
    missing = [(d, extents[d], 1) for d in ("c", "t", "s", "r") if d not in mentioned]
    levels = missing + levels
    points = []
    for combo in itertools.product(*[range(size) for _, size, _ in levels]):
        p = {d: 0 for d in extents}
        for (dim, _, weight), v in zip(levels, combo):
            p[dim] += v * weight
        if all(p[d] < extents[d] for d in extents):
            points.append(p)
    return points


def _replicas(spec: ConvSpec, schedule: Schedule) -> list[dict[str, int]]:
    """Offsets of every unroll-and-jam copy, x varying fastest."""
    dims = ("n", "k", "z", "y", "x")
    ranges = []
    for d in dims:
        unit = schedule.lanes if d == schedule.vector_loop else 1
        ranges.append([j * unit for j in range(schedule.uj_factor(d))])
    return [dict(zip(dims, combo)) for combo in itertools.product(*ranges)]


def lower(spec: ConvSpec | PaddedSpec, schedule: Schedule) -> TripletBody:
    """Unroll the reduction fully and the uj replicas, yielding one row per MAC vector."""
    if isinstance(spec, PaddedSpec):
        real_r, spec = spec.real_r, spec.spec
    else:
        real_r = spec.r
    f = spec.stride
    vec = schedule.vector_loop
    lanes = schedule.lanes
    ds = spec.variant is Variant.DS

    @functools.lru_cache(maxsize=None)
    def index(dim: str, loop: str, scale: int, offset: int, const: int = 0) -> DimIndex:
        return DimIndex(
            dim,
            const + scale * offset,
            ((loop, scale),),
            scale if loop == vec else 0,
        )

    @functools.lru_cache(maxsize=None)
    def fixed(dim: str, value: int) -> DimIndex:
        return DimIndex(dim, value)

    @functools.lru_cache(maxsize=None)
    def weight(k_off: int, c: int, t: int, s: int, r: int) -> VectorAccess:
        return VectorAccess(
            "W",
            "vector" if vec == "k" else "scalar",
            (index("k", "k", 1, k_off), fixed("c", c), fixed("t", t), fixed("s", s), fixed("r", r)),
            lanes if vec == "k" else 1,
        )

    points = reduction_points(spec, schedule)
    rows = []
    for off in _replicas(spec, schedule):
        out = VectorAccess(
            "O",
            "vector",
            tuple(index(d, d, 1, off[d]) for d in ("n", "k", "z", "y", "x")),
            lanes,
        )
        for p in points:
            w = weight(off["k"], p["c"], p["t"], p["s"], p["r"])
            chan = index("c", "k", 1, off["k"]) if ds else fixed("c", p["c"])
            i_idx = (
                index("n", "n", 1, off["n"]),
                chan,
                index("z", "z", f, off["z"], p["t"]),
                index("y", "y", f, off["y"], p["s"]),
                index("x", "x", f, off["x"], p["r"]),
            )
            i_vec = any(d.lane for d in i_idx)
            inp = VectorAccess("I", "vector" if i_vec else "scalar", i_idx, lanes if i_vec else 1)
            rows.append(TripletRow(out, w, inp, p["r"] < real_r))
    loops = tuple(residual_loops(spec, schedule))
    return TripletBody(tuple(rows), loops, spec, lanes, vec)


def lazy_store_group(body: TripletBody) -> GroupedBody:
    """Collect rows by update access, first appearance first."""
    order: dict[VectorAccess, list[TripletRow]] = {}
    for row in body.rows:
        order.setdefault(row.update, []).append(row)
    groups = tuple(Group(u, tuple(rs)) for u, rs in order.items())
    return GroupedBody(groups, body.loops, body.spec, body.lanes, body.vector_loop)
