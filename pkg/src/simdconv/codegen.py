"""Emission of the abstract vector-ISA program and its text format.

Text grammar (one item per line, ``#`` starts a comment)::

    program lanes=<n> columns=<n> precision=<I16|I32> total_macs=<n> memory=<bytes>
    spec <json>
    tensor <I|W|O> base=<bytes> elem=<bytes> layout=<json> extents=<json> logical=<json>
    loop <name> trips=<n> step=<n>            (outermost first)
    preamble:
    body:
      VLOAD  <Vg>[<byte offset>], <T> @<addr> [+<loop>*<bytes> ...], <bits>
      VSTORE <T> @<addr> [+<loop>*<bytes> ...], <Ak>, <bits>
      VMUL|VMAC <Ak>, <Vg>{b,+i*a,+j*c}, <Vg>{b,+i*a,+j*c}, cols=<n>, real=<bits>
      SMOVE <Px>, @<addr>
      SADD <Px>, <bytes>
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .config import MachineConfig
from .conv_model import ConvSpec, Precision, total_macs
from .errors import (
    ACCUMULATOR_PRESSURE,
    ALIGNMENT,
    LAYOUT,
    MEMORY_CAPACITY,
    PROGRAM_SIZE,
    CandidateRejected,
)
from .fusion import FusedOp, SelectPattern
from .lowering import GroupedBody
from .reuse import RegisterPlan, access_address
from .schedule import DataLayout, Loop, TensorStorage

TENSOR_SLACK = 128  # bytes kept free after every tensor so aligned windows may over-read
BASE_ALIGN = 128


@dataclass(frozen=True)
class Addr:
    tensor: str
    offset: int  # absolute byte address at the first iteration
    coefs: tuple[tuple[str, int], ...] = ()  # (loop, bytes per trip)

    def text(self) -> str:
        return f"{self.tensor} @{self.offset}" + "".join(f" +{n}*{c}" for n, c in self.coefs)


@dataclass(frozen=True)
class VInstr:
    op: str
    dst: str = ""
    srcs: tuple[str, ...] = ()
    addr: Addr | None = None
    width: int = 0  # bits moved by VLOAD/VSTORE
    offset: int = 0  # VLOAD: byte offset inside the destination register group
    selects: tuple[SelectPattern, ...] = ()
    columns: int = 0
    real: tuple[bool, ...] = ()
    imm: int = 0

    @property
    def is_vector_op(self) -> bool:
        return self.op in ("VMUL", "VMAC")

    @property
    def is_scalar(self) -> bool:
        return self.op in ("SMOVE", "SADD")


@dataclass(frozen=True)
class TensorDecl:
    name: str
    base: int
    storage: TensorStorage

    @property
    def end(self) -> int:
        return self.base + self.storage.nbytes


@dataclass(frozen=True)
class VProgram:
    lanes: int
    columns: int
    precision: Precision
    spec: ConvSpec  # the workload as written, before filter padding
    tensors: tuple[TensorDecl, ...]
    loops: tuple[Loop, ...]  # outermost first, single-trip loops elided
    preamble: tuple[VInstr, ...] = ()
    body: tuple[VInstr, ...] = ()
    memory: int = 0  # bytes of data memory the layout plan uses

    @property
    def trip_count(self) -> int:
        n = 1
        for l in self.loops:
            n *= l.trips
        return n

    @property
    def total_macs(self) -> int:
        return total_macs(self.spec)

    @property
    def size(self) -> int:
        return len(self.preamble) + len(self.body)

    def tensor(self, name: str) -> TensorDecl:
        return next(t for t in self.tensors if t.name == name)

    def instructions(self) -> list[tuple[int, VInstr]]:
        """(id, instr) for every instruction; ids count preamble then body."""
        return list(enumerate(self.preamble + self.body))


# ---------------------------------------------------------------------------
# memory planning


def plan_memory(storages: dict[str, TensorStorage], machine: MachineConfig, checks: bool = True):
    decls = []
    cursor = 0
    for name in ("I", "W", "O"):
        st = storages[name]
        decls.append(TensorDecl(name, cursor, st))
        cursor = -(-(cursor + st.nbytes + TENSOR_SLACK) // BASE_ALIGN) * BASE_ALIGN
    if checks and cursor > machine.memory_bytes:
        raise CandidateRejected(MEMORY_CAPACITY, f"tensors need {cursor} bytes > {machine.memory_bytes}")
    return tuple(decls), cursor


# ---------------------------------------------------------------------------
# emission


def _store_instr(group_update, storage: TensorStorage, decl: TensorDecl, loops, lanes, acc, machine, checks):
    addr = access_address(group_update, storage, loops, checks)
    eb = storage.elem_bytes
    lane_bytes = [a * eb for a in addr.lanes]
    width = lanes * eb * 8
    if checks:
        if any(b != lane_bytes[0] + i * eb for i, b in enumerate(lane_bytes)):
            raise CandidateRejected(LAYOUT, f"output lanes are not contiguous under {storage.layout}")
        if lane_bytes[0] % machine.alignment_bytes or any(c * eb % machine.alignment_bytes for _, c in addr.coefs):
            raise CandidateRejected(ALIGNMENT, f"output store at {lane_bytes[0]} with steps {addr.coefs} is unaligned")
        if width not in (128, 256):
            raise CandidateRejected(ALIGNMENT, f"store width {width} bits is not one port transfer")
    coefs = tuple((n, c * eb) for n, c in addr.coefs)
    return VInstr("VSTORE", srcs=(acc,), addr=Addr("O", decl.base + lane_bytes[0], coefs), width=width)


def _load_instrs(load, decl: TensorDecl, port_bits: int) -> list[VInstr]:
    parts = []
    for off in range(0, load.width, port_bits // 8):
        bits = min(port_bits, (load.width - off) * 8)
        parts.append(
            VInstr(
                "VLOAD",
                dst=load.gid,
                addr=Addr(load.tensor, decl.base + load.start + off, load.coefs),
                width=bits,
                offset=off,
            )
        )
    return parts


def emit(
    fused: list[list[FusedOp]],
    plan: RegisterPlan,
    grouped: GroupedBody,
    storages: dict[str, TensorStorage],
    machine: MachineConfig,
    spec: ConvSpec | None = None,
    interleave: bool = True,
    checks: bool = True,
) -> VProgram:
    """Build the program: hoisted loads in the preamble, body loads just before the op that starts each live range."""
    spec = spec or grouped.spec
    precision = grouped.spec.precision
    decls, memory = plan_memory(storages, machine, checks)
    by_name = {d.name: d for d in decls}
    loops = tuple(l for l in grouped.loops if l.trips > 1)
    port_bits = machine.port_bytes * 8
    loads = {l.gid: l for l in plan.loads}

    preamble: list[VInstr] = []
    for d in decls:
        preamble.append(VInstr("SMOVE", dst=f"P_{d.name}", addr=Addr(d.name, d.base)))
    for l in plan.loads:
        if l.hoisted:
            preamble.extend(_load_instrs(l, by_name[l.tensor], port_bits))

    loaded = {l.gid for l in plan.loads if l.hoisted}
    starts = {(gid, s) for gid, ss in plan.segments.items() for s, _ in ss}
    body: list[VInstr] = []
    load_block: list[VInstr] = []
    live_acc: set[str] = set()
    pos = 0
    for gi, ops in enumerate(fused):
        if not ops:
            continue
        for op in ops:
            for gid in (op.op2[0], op.op1[0]):
                first = gid not in loaded
                if first or (interleave and (gid, pos) in starts):
                    loaded.add(gid)
                    target = body if interleave else load_block
                    target.extend(_load_instrs(loads[gid], by_name[loads[gid].tensor], port_bits))
            pos += op.columns
            live_acc.add(op.dst)
            if checks and len(live_acc) > machine.accumulators:
                raise CandidateRejected(ACCUMULATOR_PRESSURE, f"{len(live_acc)} accumulators live")
            body.append(
                VInstr(
                    "VMUL" if op.is_first else "VMAC",
                    dst=op.dst,
                    srcs=(op.op1[0], op.op2[0]),
                    selects=(op.op1[1], op.op2[1]),
                    columns=op.columns,
                    real=op.real,
                )
            )
        last = ops[-1]
        body.append(
            _store_instr(
                grouped.groups[gi].update, storages["O"], by_name["O"], grouped.loops,
                grouped.lanes, last.dst, machine, checks,
            )
        )
        live_acc.discard(last.dst)
    body = load_block + body

    if loops:
        inner = loops[-1].name
        for d in decls:
            steps = {
                c
                for i in body
                if i.addr is not None and i.addr.tensor == d.name
                for n, c in i.addr.coefs
                if n == inner
            }
            if steps:
                body.append(VInstr("SADD", dst=f"P_{d.name}", imm=min(steps)))

    program = VProgram(
        lanes=grouped.lanes,
        columns=machine.columns(precision),
        precision=precision,
        spec=spec,
        tensors=decls,
        loops=loops,
        preamble=tuple(preamble),
        body=tuple(body),
        memory=memory,
    )
    if checks and program.size > machine.max_program_ops:
        raise CandidateRejected(PROGRAM_SIZE, f"{program.size} instructions > {machine.max_program_ops}")
    return program


# ---------------------------------------------------------------------------
# text format


def _instr_text(i: VInstr) -> str:
    if i.op == "VLOAD":
        return f"VLOAD {i.dst}[{i.offset}], {i.addr.text()}, {i.width}"
    if i.op == "VSTORE":
        return f"VSTORE {i.addr.text()}, {i.srcs[0]}, {i.width}"
    if i.is_vector_op:
        real = "".join("1" if r else "0" for r in i.real)
        return (
            f"{i.op} {i.dst}, {i.srcs[0]}{i.selects[0].text()}, {i.srcs[1]}{i.selects[1].text()}, "
            f"cols={i.columns}, real={real}"
        )
    if i.op == "SMOVE":
        return f"SMOVE {i.dst}, @{i.addr.offset} {i.addr.tensor}"
    if i.op == "SADD":
        return f"SADD {i.dst}, {i.imm}"
    raise ValueError(f"unknown op {i.op}")


def render_text(program: VProgram) -> str:
    lines = [
        f"program lanes={program.lanes} columns={program.columns} precision={program.precision.value} "
        f"total_macs={program.total_macs} memory={program.memory}",
        "spec " + json.dumps(program.spec.to_dict(), sort_keys=True),
    ]
    for t in program.tensors:
        st = t.storage
        lines.append(
            f"tensor {t.name} base={t.base} elem={st.elem_bytes} "
            f"layout={json.dumps(st.layout.to_json(), separators=(',', ':'))} "
            f"extents={json.dumps(dict(st.extents), separators=(',', ':'))} "
            f"logical={json.dumps(list(st.logical), separators=(',', ':'))}"
        )
    for l in program.loops:
        lines.append(f"loop {l.name} trips={l.trips} step={l.step}")
    lines.append("preamble:")
    lines.extend("  " + _instr_text(i) for i in program.preamble)
    lines.append("body:")
    lines.extend("  " + _instr_text(i) for i in program.body)
    return "\n".join(lines) + "\n"


_ADDR = r"([IWO]) @(-?\d+)((?: \+\w+\*-?\d+)*)"
_SEL = r"(\w+)(\{[^}]*\})"


def _parse_addr(tensor: str, offset: str, coefs: str) -> Addr:
    pairs = re.findall(r"\+(\w+)\*(-?\d+)", coefs)
    return Addr(tensor, int(offset), tuple((n, int(c)) for n, c in pairs))


def _parse_instr(line: str) -> VInstr:
    if m := re.fullmatch(rf"VLOAD (\w+)\[(\d+)\], {_ADDR}, (\d+)", line):
        return VInstr("VLOAD", dst=m[1], offset=int(m[2]), addr=_parse_addr(m[3], m[4], m[5]), width=int(m[6]))
    if m := re.fullmatch(rf"VSTORE {_ADDR}, (\w+), (\d+)", line):
        return VInstr("VSTORE", srcs=(m[4],), addr=_parse_addr(m[1], m[2], m[3]), width=int(m[5]))
    if m := re.fullmatch(rf"(VMUL|VMAC) (\w+), {_SEL}, {_SEL}, cols=(\d+), real=([01]+)", line):
        return VInstr(
            m[1],
            dst=m[2],
            srcs=(m[3], m[5]),
            selects=(SelectPattern.parse(m[4]), SelectPattern.parse(m[6])),
            columns=int(m[7]),
            real=tuple(c == "1" for c in m[8]),
        )
    if m := re.fullmatch(r"SMOVE (\w+), @(-?\d+) ([IWO])", line):
        return VInstr("SMOVE", dst=m[1], addr=Addr(m[3], int(m[2])))
    if m := re.fullmatch(r"SADD (\w+), (-?\d+)", line):
        return VInstr("SADD", dst=m[1], imm=int(m[2]))
    raise ValueError(f"cannot parse instruction {line!r}")


def parse_text(text: str) -> VProgram:
    header: dict = {}
    spec = None
    tensors, loops, pre, body = [], [], [], []
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("program "):
                header = dict(kv.split("=") for kv in line.split()[1:])
            elif line.startswith("spec "):
                spec = ConvSpec.from_dict(json.loads(line[5:]))
            elif line.startswith("tensor "):
                m = re.fullmatch(
                    r"tensor (\w) base=(\d+) elem=(\d+) layout=(\S+) extents=(\S+) logical=(\S+)", line
                )
                extents = json.loads(m[5])
                storage = TensorStorage(
                    m[1],
                    DataLayout.coerce(json.loads(m[4])),
                    tuple(extents.items()),
                    tuple(json.loads(m[6])),
                    int(m[3]),
                )
                tensors.append(TensorDecl(m[1], int(m[2]), storage))
            elif line.startswith("loop "):
                m = re.fullmatch(r"loop (\w+) trips=(\d+) step=(\d+)", line)
                loops.append(Loop(m[1], int(m[2]), int(m[3])))
            elif line == "preamble:":
                section = pre
            elif line == "body:":
                section = body
            else:
                if section is None:
                    raise ValueError("instruction outside preamble/body")
                section.append(_parse_instr(line))
        except (ValueError, TypeError, KeyError, AttributeError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if spec is None or not header:
        raise ValueError("program text lacks a header or spec line")
    return VProgram(
        lanes=int(header["lanes"]),
        columns=int(header["columns"]),
        precision=Precision(header["precision"]),
        spec=spec,
        tensors=tuple(tensors),
        loops=tuple(loops),
        preamble=tuple(pre),
        body=tuple(body),
        memory=int(header.get("memory", 0)),
    )


def render_c(program: VProgram) -> str:
    """Intrinsic-flavoured C sketch for reading; nothing consumes it."""
    out = ["// generated vector kernel sketch"]
    for i in program.preamble:
        out.append(_c_line(i))
    depth = 0
    for l in program.loops:
        out.append("  " * depth + f"for (int {l.name} = 0; {l.name} < {l.trips * l.step}; {l.name} += {l.step}) {{")
        depth += 1
    for i in program.body:
        out.append("  " * depth + _c_line(i))
    for d in range(depth - 1, -1, -1):
        out.append("  " * d + "}")
    return "\n".join(out) + "\n"


def _c_line(i: VInstr) -> str:
    if i.op == "VLOAD":
        return f"{i.dst}.part({i.offset}) = vload{i.width}({i.addr.tensor}_ptr + {i.addr.offset});"
    if i.op == "VSTORE":
        return f"vstore{i.width}({i.addr.tensor}_ptr + {i.addr.offset}, {i.srcs[0]});"
    if i.is_vector_op:
        fn = "mul" if i.op == "VMUL" else "mac"
        acc = "" if i.op == "VMUL" else f"{i.dst}, "
        return (
            f"{i.dst} = {fn}({acc}select({i.srcs[0]}, {i.selects[0].text()}), "
            f"select({i.srcs[1]}, {i.selects[1].text()}));"
        )
    if i.op == "SMOVE":
        return f"{i.dst} = {i.addr.offset};"
    return f"{i.dst} += {i.imm};"
