"""Reuse graphs over loads, coalescing into aligned register windows, and the register plan."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import MachineConfig
from .errors import ALIGNMENT, LAYOUT, OVERSIZED, REGISTER_PRESSURE, CandidateRejected
from .lowering import SCALAR, GroupedBody, TripletRow, VectorAccess
from .schedule import Loop, TensorStorage


@dataclass(frozen=True)
class AccessAddress:
    """Element offsets of each lane at the first iteration plus per-trip advances."""

    lanes: tuple[int, ...]
    coefs: tuple[tuple[str, int], ...]  # (loop, elements per trip), zero advances omitted


def access_address(
    access: VectorAccess, storage: TensorStorage, loops: tuple[Loop, ...], checks: bool = True
) -> AccessAddress:
    """Resolve an affine access through a (possibly blocked) layout.

    Loop advances must move a blocked dim by whole blocks, otherwise the address
    stops being affine in the loop counters and the layout is rejected.
    """
    blocks = storage._blocks
    base = access.coords({})
    lane_dim = access.lane_dim()
    if lane_dim is None:
        lanes = (storage.raw_address(base),) * access.lane_count
    else:
        step = next(d.lane for d in access.index if d.dim == lane_dim)
        spread = dict(base)
        spread[lane_dim] = base[lane_dim] + step * np.arange(access.lane_count)
        lanes = tuple(storage.raw_address(spread).tolist())
    coefs = []
    for loop in loops:
        if loop.trips <= 1:
            continue
        moved = dict(base)
        touched = False
        for d in access.index:
            c = dict(d.ivs).get(loop.name, 0)
            if not c:
                continue
            touched = True
            adv = c * loop.step
            if checks and d.dim in blocks and adv % blocks[d.dim]:
                raise CandidateRejected(
                    LAYOUT,
                    f"{access.tensor}: loop {loop.name} advances {d.dim} by {adv}, "
                    f"not a multiple of block {blocks[d.dim]}",
                )
            moved[d.dim] += adv
        if touched:
            delta = storage.raw_address(moved) - storage.raw_address(base)
            if delta:
                coefs.append((loop.name, delta))
    return AccessAddress(lanes, tuple(coefs))


@dataclass(frozen=True)
class LoadNode:
    access: VectorAccess
    start: int  # byte interval [start, end) relative to the tensor base, first iteration
    end: int
    coefs: tuple[tuple[str, int], ...]  # bytes per trip
    lane_bytes: tuple[int, ...]

    @property
    def vector(self) -> bool:
        return self.access.kind != SCALAR


@dataclass(frozen=True)
class ReuseGraph:
    tensor: str
    nodes: tuple[LoadNode, ...]
    edges: tuple[tuple[int, int], ...]

    def components(self) -> list[list[int]]:
        parent = list(range(len(self.nodes)))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in self.edges:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        comps: dict[int, list[int]] = {}
        for i in range(len(self.nodes)):
            comps.setdefault(find(i), []).append(i)
        return list(comps.values())


def _floor(v: int, q: int) -> int:
    return v - v % q


def _ceil(v: int, q: int) -> int:
    return -(-v // q) * q


def _node(access, storage, loops, checks) -> LoadNode:
    addr = access_address(access, storage, loops, checks)
    eb = storage.elem_bytes
    lane_bytes = tuple(a * eb for a in addr.lanes)
    return LoadNode(
        access,
        min(lane_bytes),
        max(lane_bytes) + eb,
        tuple((l, c * eb) for l, c in addr.coefs),
        lane_bytes,
    )


def _linked(a: LoadNode, b: LoadNode, align: int, window: int) -> bool:
    if a.vector or b.vector:
        return a.start < b.end and b.start < a.end
    lo = min(_floor(a.start, align), _floor(b.start, align))
    hi = max(_ceil(a.end, align), _ceil(b.end, align))
    touching = _floor(a.start, align) <= _ceil(b.end, align) and _floor(b.start, align) <= _ceil(a.end, align)
    return touching and hi - lo <= window


def _early_checks(n: LoadNode, tensor: str, align: int, window: int) -> None:
    """Per-node versions of the window checks, so hopeless candidates stop early."""
    span = n.end - _floor(n.start, align)
    if n.vector and span > window:
        raise CandidateRejected(
            OVERSIZED, f"{tensor} access {n.access.render()} spans {span} bytes > {window}-byte register"
        )
    bad = [(l, c) for l, c in n.coefs if c % align]
    if bad:
        raise CandidateRejected(
            ALIGNMENT, f"{tensor} access {n.access.render()} advances {bad} bytes per trip, not {align}-aligned"
        )


def collect_nodes(
    grouped: GroupedBody, tensor: str, storage: TensorStorage, machine: MachineConfig, checks: bool = True
) -> list[LoadNode]:
    """One node per distinct access of ``tensor``, in first-use order."""
    align, window = machine.alignment_bytes, machine.max_register_bytes
    seen: set[VectorAccess] = set()
    nodes: list[LoadNode] = []
    for row in grouped.rows():
        for acc in (row.op2, row.op1):
            if acc.tensor == tensor and acc not in seen:
                seen.add(acc)
                node = _node(acc, storage, grouped.loops, checks)
                if checks:
                    _early_checks(node, tensor, align, window)
                nodes.append(node)
    return nodes


def build_reuse_graph(
    grouped: GroupedBody,
    tensor: str,
    storage: TensorStorage,
    machine: MachineConfig | None = None,
    checks: bool = True,
    nodes: list[LoadNode] | None = None,
) -> ReuseGraph:
    """One node per distinct access of ``tensor``; edges join shared or co-resident bytes."""
    machine = machine or MachineConfig()
    align, window = machine.alignment_bytes, machine.max_register_bytes
    if nodes is None:
        nodes = collect_nodes(grouped, tensor, storage, machine, checks)
    edges = []
    by_coef: dict[tuple, list[int]] = {}
    for i, n in enumerate(nodes):
        by_coef.setdefault(n.coefs, []).append(i)
    for members in by_coef.values():
        members.sort(key=lambda i: (nodes[i].start, nodes[i].end))
        idx = np.array(members)
        start = np.array([nodes[i].start for i in members])
        end = np.array([nodes[i].end for i in members])
        lo, hi = start - start % align, -(-end // align) * align
        vector = nodes[members[0]].vector
        # sorted by start, so every candidate partner of a node lies in a short run after it
        limit = end if vector else np.maximum(end, lo + window) + align
        stop = np.searchsorted(start, limit, side="left")
        for p in range(len(members)):
            js = np.arange(p + 1, max(stop[p], p + 1))
            if not len(js):
                continue
            if vector:
                ok = start[js] < end[p]
            else:
                span = np.maximum(hi[js], hi[p]) - np.minimum(lo[js], lo[p])
                ok = (lo[js] <= hi[p]) & (lo[p] <= hi[js]) & (span <= window)
            i = idx[p]
            edges.extend((min(i, j), max(i, j)) for j in idx[js[ok]].tolist())
    return ReuseGraph(tensor, tuple(nodes), tuple(sorted((int(a), int(b)) for a, b in edges)))


@dataclass(frozen=True)
class Window:
    tensor: str
    start: int  # bytes from the tensor base, first iteration
    width: int  # bytes
    coefs: tuple[tuple[str, int], ...]
    nodes: tuple[int, ...]

    @property
    def key(self) -> tuple:
        return (self.tensor, self.start, self.width, self.coefs)


def _fit_width(span: int, machine: MachineConfig) -> int:
    for w in machine.register_byte_widths:
        if span <= w:
            return w
    w = machine.max_register_bytes
    while w < span:
        w *= 2
    return w


def coalesce(graph: ReuseGraph, machine: MachineConfig, checks: bool = True) -> list[Window]:
    """Cover every component with aligned windows, splitting greedily from the left."""
    align, cap = machine.alignment_bytes, machine.max_register_bytes
    windows: dict[tuple, Window] = {}
    for comp in graph.components():
        order = sorted(comp, key=lambda i: (graph.nodes[i].start, graph.nodes[i].end, i))
        pos = 0
        while pos < len(order):
            first = graph.nodes[order[pos]]
            wstart = _floor(first.start, align)
            if first.end - wstart > cap and checks:
                raise CandidateRejected(
                    OVERSIZED,
                    f"{graph.tensor} access {first.access.render()} spans {first.end - wstart} bytes "
                    f"> {cap}-byte register",
                )
            taken = [order[pos]]
            hi = first.end
            pos += 1
            while pos < len(order):
                n = graph.nodes[order[pos]]
                if max(hi, n.end) - wstart > cap:
                    break
                hi = max(hi, n.end)
                taken.append(order[pos])
                pos += 1
            win = Window(graph.tensor, wstart, _fit_width(hi - wstart, machine), first.coefs, tuple(taken))
            if win.key in windows:
                old = windows[win.key]
                win = Window(win.tensor, win.start, win.width, win.coefs, old.nodes + win.nodes)
            windows[win.key] = win
    return list(windows.values())


@dataclass(frozen=True)
class LargerLoad:
    gid: str
    tensor: str
    start: int  # bytes from the tensor base at the first iteration
    width: int  # bytes
    coefs: tuple[tuple[str, int], ...]  # bytes per trip
    hoisted: bool = False

    @property
    def invariant(self) -> bool:
        return not self.coefs

    @property
    def bits(self) -> int:
        return self.width * 8


@dataclass(frozen=True)
class Binding:
    gid: str
    offsets: tuple[int, ...]  # element offset of each lane inside the register group


@dataclass
class RegisterPlan:
    loads: list[LargerLoad] = field(default_factory=list)
    bindings: dict[VectorAccess, Binding] = field(default_factory=dict)
    peak_bytes: int = 0
    segments: dict[str, list[tuple[int, int]]] = field(default_factory=dict)  # MAC positions each load covers

    def load(self, gid: str) -> LargerLoad:
        return next(l for l in self.loads if l.gid == gid)

    def gid_of(self, access: VectorAccess) -> str:
        return self.bindings[access].gid

    def dump(self) -> str:
        lines = ["gid  tensor  start  width  coefs  hoisted"]
        for l in self.loads:
            coefs = ",".join(f"{n}*{c}" for n, c in l.coefs) or "-"
            lines.append(f"{l.gid:<4} {l.tensor:<7} {l.start:<6} {l.bits:<6} {coefs:<6} {'yes' if l.hoisted else 'no'}")
        for gid, ss in self.segments.items():
            if len(ss) > 1:
                lines.append(f"{gid} reloaded at MACs {', '.join(str(s) for s, _ in ss[1:])}")
        lines.append(f"peak register bytes: {self.peak_bytes}")
        return "\n".join(lines) + "\n"


def bucket_macs(macs: tuple[TripletRow, ...], plan: RegisterPlan) -> list[list[TripletRow]]:
    """Bucket one group's MACs by (operand1 group, operand2 group), first appearance first."""
    buckets: dict[tuple[str, str], list[TripletRow]] = {}
    for row in macs:
        buckets.setdefault((plan.gid_of(row.op1), plan.gid_of(row.op2)), []).append(row)
    return list(buckets.values())


def mac_order(grouped: GroupedBody, plan: RegisterPlan) -> list[TripletRow]:
    return [r for g in grouped.groups for b in bucket_macs(g.macs, plan) for r in b]


def _segments(grouped: GroupedBody, plan: RegisterPlan) -> tuple[dict[str, list[list[int]]], int]:
    """Use interval of every window inside each lazy-store group, in MAC positions."""
    segs: dict[str, list[list[int]]] = {}
    pos = 0
    for g in grouped.groups:
        seen: dict[str, list[int]] = {}
        for bucket in bucket_macs(g.macs, plan):
            for row in bucket:
                for acc in (row.op2, row.op1):
                    gid = plan.gid_of(acc)
                    if gid in seen:
                        seen[gid][1] = pos
                    else:
                        seen[gid] = [pos, pos]
                        segs.setdefault(gid, []).append(seen[gid])
                pos += 1
    return segs, pos


def assign_live_ranges(grouped: GroupedBody, plan: RegisterPlan, budget: int) -> int:
    """Hoist invariant windows and decide which windows stay resident between groups.

    A window is always live from its first to its last use within one group. Between
    groups it is kept in registers when that fits, shortest gap first; otherwise it is
    loaded again. Returns the bytes that must be live at once with no reuse across
    groups, which is the figure the register file has to hold.
    """
    plan.loads = [replace(l, hoisted=False) for l in plan.loads]
    segs, n = _segments(grouped, plan)
    width = {l.gid: l.width for l in plan.loads}
    live = np.zeros(max(n, 1), dtype=np.int64)
    for gid, ss in segs.items():
        for s, e in ss:
            live[s : e + 1] += width[gid]
    pinned = 0
    for k, l in enumerate(plan.loads):
        if not l.invariant or l.gid not in segs:
            continue
        trial = live.copy()
        for s, e in segs[l.gid]:
            trial[s : e + 1] -= l.width
        if trial.max() + pinned + l.width <= budget:
            live = trial
            pinned += l.width
            plan.loads[k] = replace(l, hoisted=True)
    required = int(live.max()) + pinned

    hoisted = {l.gid for l in plan.loads if l.hoisted}
    order = {l.gid: k for k, l in enumerate(plan.loads)}
    gaps = [
        (ss[i + 1][0] - ss[i][1], order[gid], i, gid)
        for gid, ss in segs.items()
        if gid not in hoisted
        for i in range(len(ss) - 1)
    ]
    bridged: set[tuple[str, int]] = set()
    for _, _, i, gid in sorted(gaps):
        lo, hi = segs[gid][i][1] + 1, segs[gid][i + 1][0]
        if hi <= lo or live[lo:hi].max() + width[gid] + pinned <= budget:
            live[lo:hi] += width[gid]
            bridged.add((gid, i))
    plan.segments = {}
    for gid, ss in segs.items():
        if gid in hoisted:
            continue
        merged = [list(ss[0])]
        for i in range(1, len(ss)):
            if (gid, i - 1) in bridged:
                merged[-1][1] = ss[i][1]
            else:
                merged.append(list(ss[i]))
        plan.segments[gid] = [tuple(m) for m in merged]
    plan.peak_bytes = int(live.max()) + pinned
    return required


def plan_loads(
    grouped: GroupedBody,
    storages: dict[str, TensorStorage],
    machine: MachineConfig,
    checks: bool = True,
) -> RegisterPlan:
    """Coalesce the input and weight loads and bind every operand access to a window."""
    windows: list[Window] = []
    nodes_of: dict[str, tuple[LoadNode, ...]] = {}
    if checks:
        # the block rule depends only on a tensor's loop coefficients, shared by all its accesses
        first = {}
        for row in grouped.rows():
            for acc in (row.op2, row.op1):
                first.setdefault(acc.tensor, acc)
            if len(first) == 2:
                break
        for t, acc in sorted(first.items()):
            access_address(acc, storages[t], grouped.loops, checks)
    # every node of both tensors is checked before any edge is built
    collected = {t: collect_nodes(grouped, t, storages[t], machine, checks) for t in ("I", "W")}
    for tensor in ("I", "W"):
        graph = build_reuse_graph(grouped, tensor, storages[tensor], machine, checks, collected[tensor])
        nodes_of[tensor] = graph.nodes
        windows.extend(coalesce(graph, machine, checks))

    where: dict[VectorAccess, Window] = {}
    node_by_access: dict[VectorAccess, LoadNode] = {}
    for win in windows:
        for i in win.nodes:
            node = nodes_of[win.tensor][i]
            where.setdefault(node.access, win)
            node_by_access[node.access] = node

    plan = RegisterPlan()
    gids: dict[tuple, str] = {}
    for row in grouped.rows():
        for acc in (row.op2, row.op1):
            win = where[acc]
            if win.key not in gids:
                gids[win.key] = f"V{len(gids) + 1}"
                plan.loads.append(LargerLoad(gids[win.key], win.tensor, win.start, win.width, win.coefs))
            if acc not in plan.bindings:
                eb = storages[acc.tensor].elem_bytes
                node = node_by_access[acc]
                plan.bindings[acc] = Binding(gids[win.key], tuple((b - win.start) // eb for b in node.lane_bytes))

    if checks:
        for l in plan.loads:
            bad = [(n, c) for n, c in l.coefs if c % machine.alignment_bytes]
            if bad:
                raise CandidateRejected(
                    ALIGNMENT, f"{l.gid} ({l.tensor}) advances {bad} bytes per trip, not {machine.alignment_bytes}-aligned"
                )
    required = assign_live_ranges(grouped, plan, machine.register_file_bytes)
    if checks and required > machine.register_file_bytes:
        raise CandidateRejected(
            REGISTER_PRESSURE, f"{required} register bytes live inside one group > {machine.register_file_bytes}"
        )
    return plan
