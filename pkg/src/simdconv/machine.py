"""The abstract 2D-SIMD VLIW machine: program validation, functional simulation, throughput.

Throughput is a steady-state bottleneck model of a software-pipelined innermost
loop. Per iteration the kernel needs

    max(ceil(vload_issues / read_ports), vstores / write_ports,
        vector_ops / vector_slots, ceil(scalar_ops / scalar_slots))

cycles. The whole nest costs ``kernel * trips + pipeline_charge * loop_levels``
plus the preamble, which is charged by the same bottleneck formula.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .codegen import VInstr, VProgram
from .config import MachineConfig
from .conv_model import TENSOR_DIMS, ConvSpec, Precision, TensorData, Workload
from .errors import (
    ACCUMULATOR_PRESSURE,
    ALIGNMENT,
    FUSION_REMAINDER,
    MEMORY_CAPACITY,
    OVERSIZED,
    PROGRAM_SIZE,
    REGISTER_PRESSURE,
    SELECT_INFEASIBLE,
    MemoryFault,
    SpecMismatch,
)
from .fusion import pairing_violations

__all__ = [
    "MachineConfig",
    "Violation",
    "validate",
    "Throughput",
    "throughput",
    "SimResult",
    "simulate",
    "dump_tensor",
]

WIDTH = "width"
SELECT_RANGE = "select-range"
UNINIT_ACC = "uninitialized-accumulator"
UNINIT_REG = "uninitialized-register"
OUT_OF_BOUNDS = "out-of-bounds"


@dataclass(frozen=True)
class Violation:
    kind: str
    instr: int | None
    detail: str


def group_bytes(program: VProgram) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for _, i in program.instructions():
        if i.op == "VLOAD":
            sizes[i.dst] = max(sizes.get(i.dst, 0), i.offset + i.width // 8)
    return sizes


def _addr_range(program: VProgram, instr: VInstr) -> tuple[int, int]:
    trips = {l.name: l.trips for l in program.loops}
    lo = hi = instr.addr.offset
    for name, c in instr.addr.coefs:
        span = c * (trips.get(name, 1) - 1)
        lo, hi = lo + min(0, span), hi + max(0, span)
    return lo, hi + instr.width // 8


def validate(program: VProgram, config: MachineConfig | None = None) -> list[Violation]:
    """Every machine constraint the program breaks; an empty list means it is legal."""
    config = config or MachineConfig()
    out: list[Violation] = []
    eb = program.precision.nbytes
    sizes = group_bytes(program)
    align = config.alignment_bytes
    mem_size = config.memory_bytes

    if program.size > config.max_program_ops:
        out.append(Violation(PROGRAM_SIZE, None, f"{program.size} instructions > {config.max_program_ops}"))
    if program.memory > mem_size or any(t.end > mem_size for t in program.tensors):
        out.append(Violation(MEMORY_CAPACITY, None, f"data needs {program.memory} bytes > {mem_size}"))
    for gid, size in sizes.items():
        if size > config.max_register_bytes:
            out.append(Violation(OVERSIZED, None, f"{gid} is {size * 8} bits > {config.max_register_bytes * 8}"))

    n_pre = len(program.preamble)
    first_load: dict[str, int] = {}
    last_use: dict[str, int] = {}
    for idx, i in program.instructions():
        if i.op in ("VLOAD", "VSTORE"):
            if i.addr.offset % align or any(c % align for _, c in i.addr.coefs):
                out.append(Violation(ALIGNMENT, idx, f"{i.op} address {i.addr.text()} not {align}-byte aligned"))
            if i.width not in (128, 256) or i.width > config.port_bytes * 8:
                out.append(Violation(WIDTH, idx, f"{i.op} moves {i.width} bits"))
            lo, hi = _addr_range(program, i)
            if lo < 0 or hi > max(mem_size, program.memory):
                out.append(Violation(OUT_OF_BOUNDS, idx, f"{i.op} touches [{lo}, {hi})"))
        if i.op == "VLOAD":
            first_load.setdefault(i.dst, idx)
        if i.is_vector_op:
            if i.columns != program.columns:
                out.append(Violation(FUSION_REMAINDER, idx, f"{i.columns} columns used of {program.columns}"))
            for gid, sel in zip(i.srcs, i.selects):
                if gid not in first_load:
                    out.append(Violation(UNINIT_REG, idx, f"{gid} read before any load"))
                    continue
                last_use[gid] = idx
                grid = sel.index(program.lanes, i.columns)
                elems = sizes.get(gid, 0) // eb
                if grid.min() < 0 or grid.max() >= elems:
                    out.append(Violation(SELECT_RANGE, idx, f"SELECT {sel.text()} outside {gid}[0:{elems}]"))
                if program.precision is Precision.I16:
                    for problem in pairing_violations(grid):
                        out.append(Violation(SELECT_INFEASIBLE, idx, f"{gid}{sel.text()}: {problem}"))

    # register-file occupancy: preamble groups stay live; in the body a range runs from a
    # load to the last read before that group is loaded again
    hoisted = {g for g, at in first_load.items() if at < n_pre}
    ranges: list[tuple[int, int, int]] = []
    open_at: dict[str, list[int]] = {}
    for idx, i in program.instructions():
        if idx < n_pre or i.dst in hoisted and i.op == "VLOAD":
            continue
        if i.op == "VLOAD":
            cur = open_at.get(i.dst)
            if cur is not None and cur[1] > cur[0]:
                ranges.append((cur[0], cur[1], sizes[i.dst]))
                cur = None
            if cur is None:
                open_at[i.dst] = [idx, idx]
        elif i.is_vector_op:
            for gid in i.srcs:
                if gid in open_at:
                    open_at[gid][1] = idx
    ranges.extend((a, b, sizes[g]) for g, (a, b) in open_at.items())
    base = sum(sizes[g] for g in hoisted)
    events = sorted([(a, w) for a, _, w in ranges] + [(b + 1, -w) for _, b, w in ranges])
    live = peak = base
    for _, d in events:
        live += d
        peak = max(peak, live)
    if peak > config.register_file_bytes:
        out.append(Violation(REGISTER_PRESSURE, None, f"{peak} register bytes live > {config.register_file_bytes}"))

    # accumulators: initialized by VMUL before any VMAC, freed by VSTORE
    ready: set[str] = set()
    for idx, i in program.instructions():
        if i.op == "VMUL":
            ready.add(i.dst)
            if len(ready) > config.accumulators:
                out.append(Violation(ACCUMULATOR_PRESSURE, idx, f"{len(ready)} accumulators live"))
        elif i.op == "VMAC" and i.dst not in ready:
            out.append(Violation(UNINIT_ACC, idx, f"VMAC into {i.dst} without a prior VMUL"))
        elif i.op == "VSTORE":
            if i.srcs[0] not in ready:
                out.append(Violation(UNINIT_ACC, idx, f"VSTORE of unwritten {i.srcs[0]}"))
            ready.discard(i.srcs[0])
    for idx, i in program.instructions():
        if i.is_vector_op and int(i.dst.lstrip("A") or 0) >= config.accumulators:
            out.append(Violation(ACCUMULATOR_PRESSURE, idx, f"{i.dst} beyond {config.accumulators} accumulators"))
    return out


# ---------------------------------------------------------------------------
# throughput


@dataclass(frozen=True)
class Throughput:
    kernel_cycles: int
    preamble_cycles: int
    total_cycles: int
    macs_per_cycle: float
    vload_issues: int
    vstore_issues: int
    vector_ops: int
    scalar_ops: int
    load_bytes: int  # per innermost iteration
    store_bytes: int


def _bottleneck(instrs, config: MachineConfig) -> tuple[int, int, int, int, int]:
    loads = sum(1 for i in instrs if i.op == "VLOAD")
    stores = sum(1 for i in instrs if i.op == "VSTORE")
    vops = sum(1 for i in instrs if i.is_vector_op)
    scalar = sum(1 for i in instrs if i.is_scalar)
    cycles = max(
        -(-loads // config.read_ports),
        -(-stores // config.write_ports),
        -(-vops // config.vector_slots),
        -(-scalar // config.scalar_slots),
    )
    return cycles, loads, stores, vops, scalar


def throughput(program: VProgram, config: MachineConfig | None = None) -> Throughput:
    config = config or MachineConfig()
    kernel, loads, stores, vops, scalar = _bottleneck(program.body, config)
    pre, *_ = _bottleneck(program.preamble, config)
    load_bytes = sum(i.width // 8 for i in program.body if i.op == "VLOAD")
    store_bytes = sum(i.width // 8 for i in program.body if i.op == "VSTORE")
    if not program.body:
        return Throughput(0, 0, 0, 0.0, 0, 0, 0, 0, 0, 0)
    total = kernel * program.trip_count + config.pipeline_charge * len(program.loops) + pre
    mpc = program.total_macs / total if total else 0.0
    return Throughput(kernel, pre, total, mpc, loads, stores, vops, scalar, load_bytes, store_bytes)


# ---------------------------------------------------------------------------
# simulation


@dataclass
class SimResult:
    output: TensorData
    stats: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = dict(self.stats)
        d["output_checksum"] = self.output.checksum()
        return json.dumps(d, indent=2, sort_keys=True)


def _place(memory: np.ndarray, decl, tensor: TensorData) -> None:
    dtype = np.dtype(tensor.values.dtype).newbyteorder("<")
    st = decl.storage
    view = memory[decl.base : decl.base + st.nbytes].view(dtype)
    view[st.address_grid(tensor.shape)] = tensor.values


def _read(memory: np.ndarray, decl, spec: ConvSpec) -> np.ndarray:
    dtype = spec.precision.dtype.newbyteorder("<")
    st = decl.storage
    view = memory[decl.base : decl.base + st.nbytes].view(dtype)
    return view[st.address_grid(spec.tensor_shape("O"))].astype(spec.precision.dtype)


class _Machine:
    def __init__(self, program: VProgram, memory: np.ndarray):
        self.p = program
        self.mem = memory
        self.regs: dict[str, np.ndarray] = {}
        self.accs: dict[str, np.ndarray] = {}
        self.sizes = group_bytes(program)
        self.elem = program.precision.dtype.newbyteorder("<")

    def _addresses(self, instr_id: int, instr: VInstr, env: Mapping[str, np.ndarray], nbytes: int) -> np.ndarray:
        addr = np.full(next(iter(env.values())).shape if env else (1,), instr.addr.offset, dtype=np.int64)
        for name, c in instr.addr.coefs:
            if name in env:
                addr = addr + c * env[name]
        if addr.min() < 0 or addr.max() + nbytes > self.mem.size:
            raise MemoryFault(instr_id, f"{instr.op} at [{addr.min()}, {addr.max() + nbytes}) outside memory")
        return addr

    def run(self, instrs, first_id: int, env: Mapping[str, np.ndarray]) -> None:
        for n, i in enumerate(instrs):
            iid = first_id + n
            if i.op == "VLOAD":
                nb = i.width // 8
                addr = self._addresses(iid, i, env, nb)
                data = self.mem[addr[:, None] + np.arange(nb)]
                reg = self.regs.get(i.dst)
                if reg is None or reg.shape[0] != data.shape[0]:
                    reg = np.zeros((data.shape[0], self.sizes[i.dst]), dtype=np.uint8)
                    self.regs[i.dst] = reg
                reg[:, i.offset : i.offset + nb] = data
            elif i.is_vector_op:
                total = None
                for gid, sel in zip(i.srcs, i.selects):
                    if gid not in self.regs:
                        raise MemoryFault(iid, f"{gid} read before load")
                    vals = self.regs[gid].view(self.elem)
                    idx = sel.index(self.p.lanes, i.columns)
                    if idx.min() < 0 or idx.max() >= vals.shape[1]:
                        raise MemoryFault(iid, f"SELECT {sel.text()} outside {gid}")
                    g = vals[:, idx].astype(np.int64)
                    total = g if total is None else total * g
                prod = total.sum(axis=2)
                if i.op == "VMUL":
                    self.accs[i.dst] = prod
                else:
                    if i.dst not in self.accs:
                        raise MemoryFault(iid, f"VMAC into uninitialized {i.dst}")
                    self.accs[i.dst] = self.accs[i.dst] + prod
            elif i.op == "VSTORE":
                nb = i.width // 8
                acc = self.accs.pop(i.srcs[0], None)
                if acc is None:
                    raise MemoryFault(iid, f"VSTORE of unwritten {i.srcs[0]}")
                data = np.ascontiguousarray(acc.astype(self.elem)).view(np.uint8)
                if data.shape[1] != nb:
                    raise MemoryFault(iid, f"store of {data.shape[1]} bytes declared as {nb}")
                addr = self._addresses(iid, i, env, nb)
                if data.shape[0] != addr.shape[0]:
                    data = np.broadcast_to(data, (addr.shape[0], nb))
                self.mem[addr[:, None] + np.arange(nb)] = data
            # scalar pointer arithmetic has no architectural effect in this model


def simulate(
    program: VProgram,
    workload: Workload,
    layouts=None,
    config: MachineConfig | None = None,
    mode: str = "batched",
) -> SimResult:
    """Execute the program on the workload and read the output back in canonical order.

    ``batched`` runs each body instruction over all iterations at once; it is exact
    because loads never read the output tensor. ``sequential`` steps iteration by
    iteration and exists as a cross-check. ``layouts`` is accepted for interface
    symmetry; the program already records its tensor layouts.
    """
    config = config or MachineConfig()
    spec = program.spec
    for name, tensor in (("I", workload.input), ("W", workload.weights)):
        expected = tuple(zip(TENSOR_DIMS[name], spec.tensor_shape(name)))
        if tensor.dims != expected:
            raise SpecMismatch(f"workload {name} dims {tensor.dims} != program {expected}")
    memory = np.zeros(max(config.memory_bytes, program.memory), dtype=np.uint8)
    _place(memory, program.tensor("I"), workload.input)
    _place(memory, program.tensor("W"), workload.weights)

    m = _Machine(program, memory)
    m.run(program.preamble, 0, {})
    names = [l.name for l in program.loops]
    trips = tuple(l.trips for l in program.loops)
    grids = np.indices(trips).reshape(len(trips), -1) if trips else np.zeros((0, 1), dtype=np.int64)
    n_pre = len(program.preamble)
    if mode == "batched":
        m.run(program.body, n_pre, dict(zip(names, grids)))
    elif mode == "sequential":
        for t in range(grids.shape[1]):
            env = {name: grids[k, t : t + 1] for k, name in enumerate(names)}
            m.run(program.body, n_pre, env)
    else:
        raise ValueError(f"unknown simulation mode {mode!r}")

    out = _read(memory, program.tensor("O"), spec)
    dims = tuple(zip(TENSOR_DIMS["O"], spec.tensor_shape("O")))
    output = TensorData(dims, spec.precision, out)
    tp = throughput(program, config)
    stats = {
        "counts": _counts(program),
        "kernel_cycles": tp.kernel_cycles,
        "preamble_cycles": tp.preamble_cycles,
        "total_cycles": tp.total_cycles,
        "macs_per_cycle": round(tp.macs_per_cycle, 6),
        "total_macs": program.total_macs,
        "trip_count": program.trip_count,
        "load_bytes_per_iter": tp.load_bytes,
        "store_bytes_per_iter": tp.store_bytes,
        "instructions": program.size,
    }
    return SimResult(output, stats)


def _counts(program: VProgram) -> dict:
    counts = {}
    for section, instrs in (("preamble", program.preamble), ("body", program.body)):
        c: dict[str, int] = {}
        for i in instrs:
            c[i.op] = c.get(i.op, 0) + 1
        counts[section] = dict(sorted(c.items()))
    return counts


def dump_tensor(tensor: TensorData) -> str:
    """Plain-text dump: a dims header, then one ``index value`` line per element."""
    lines = ["# dims " + " ".join(f"{d}={e}" for d, e in tensor.dims) + f" precision={tensor.precision.value}"]
    for idx, v in zip(np.ndindex(*tensor.shape), tensor.flat_values):
        lines.append(" ".join(map(str, idx)) + f" {int(v)}")
    return "\n".join(lines) + "\n"
