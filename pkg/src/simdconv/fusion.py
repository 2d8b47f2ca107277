"""Fusion of 1D vector MACs onto the lanes x columns datapath, and SELECT pattern solving.

The 16-bit shuffle constraint is a model, not the hardware's (unpublished) rule set:
a pattern is selectable when its column stride is 0 or 1 and its lane stride is 0, 1
or a non-negative even number, so every 32-bit slot of the register is read whole
or as one element pair.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass

import numpy as np

from .config import MachineConfig
from .conv_model import Precision
from .errors import FUSION_REMAINDER, CandidateRejected, SelectInfeasible
from .lowering import GroupedBody, VectorAccess
from .reuse import RegisterPlan, bucket_macs


@dataclass(frozen=True)
class SelectPattern:
    base: int
    lane_stride: int
    col_stride: int

    def index(self, lanes: int, columns: int) -> np.ndarray:
        """(lanes, columns) array of register-group element indices."""
        i = np.arange(lanes)[:, None]
        j = np.arange(columns)[None, :]
        return self.base + i * self.lane_stride + j * self.col_stride

    def text(self) -> str:
        return f"{{{self.base},+i*{self.lane_stride},+j*{self.col_stride}}}"

    @classmethod
    def parse(cls, text: str) -> "SelectPattern":
        m = re.fullmatch(r"\{(-?\d+),\+i\*(-?\d+),\+j\*(-?\d+)\}", text.strip())
        if not m:
            raise ValueError(f"bad SELECT pattern {text!r}")
        return cls(*(int(g) for g in m.groups()))

    def pretty(self) -> str:
        """Short form like ``i+j+2`` or ``j``."""
        terms = []
        for coef, var in ((self.lane_stride, "i"), (self.col_stride, "j")):
            if coef == 1:
                terms.append(var)
            elif coef:
                terms.append(f"{coef}{var}")
        if self.base or not terms:
            terms.append(str(self.base))
        return "+".join(terms).replace("+-", "-")


def pairing_ok(pattern: SelectPattern) -> bool:
    """The 16-bit selection predicate in its affine form."""
    ls, cs = pattern.lane_stride, pattern.col_stride
    return cs in (0, 1) and (ls in (0, 1) or (ls >= 0 and ls % 2 == 0))


def pairing_violations(idx: np.ndarray) -> list[str]:
    """Elementwise form of the 16-bit predicate over a (lanes, columns) index array."""
    problems = []
    if idx.shape[1] > 1:
        col = np.diff(idx, axis=1)
        if not np.isin(col, (0, 1)).all():
            problems.append("column pair is not one 32-bit slot")
    if idx.shape[0] > 1:
        lane = np.diff(idx, axis=0)
        ok = (lane == 0) | (lane == 1) | ((lane >= 0) & (lane % 2 == 0))
        if not ok.all():
            problems.append("lane step splits a 32-bit slot")
    return problems


def solve_select(
    columns: list[tuple[int, ...]], group_width: int, precision: Precision, checks: bool = True
) -> SelectPattern:
    """Find (base, lane_stride, col_stride) with ``columns[j][i] = base + i*ls + j*cs``."""
    return _solve(tuple(tuple(c) for c in columns), group_width, Precision(precision), checks)


@functools.lru_cache(maxsize=4096)
def _solve(columns: tuple[tuple[int, ...], ...], group_width: int, precision: Precision, checks: bool) -> SelectPattern:
    if not columns:
        raise SelectInfeasible("no columns")
    lanes = max(len(c) for c in columns)
    cols = [tuple(c) * lanes if len(c) == 1 else tuple(c) for c in columns]
    base = cols[0][0]
    ls = cols[0][1] - cols[0][0] if lanes > 1 else 0
    cs = cols[1][0] - cols[0][0] if len(cols) > 1 else 0
    pattern = SelectPattern(base, ls, cs)
    idx = pattern.index(lanes, len(cols))
    if not np.array_equal(idx, np.array(cols).T):
        raise SelectInfeasible(f"offsets {cols} are not an affine lane/column pattern")
    if checks:
        if idx.min() < 0 or idx.max() >= group_width:
            raise SelectInfeasible(f"pattern {pattern.text()} leaves [0, {group_width})")
        if Precision(precision) is Precision.I16 and len(cols) > 1 and not pairing_ok(pattern):
            raise SelectInfeasible(f"16-bit pattern {pattern.text()} breaks 32-bit pairing")
    return pattern


@dataclass(frozen=True)
class FusedOp:
    dst: str  # accumulator id
    group: int
    update: VectorAccess
    lanes: int
    columns: int
    op1: tuple[str, SelectPattern]  # weights
    op2: tuple[str, SelectPattern]  # input
    is_first: bool
    real: tuple[bool, ...]  # False marks zero columns added by filter padding

    @property
    def real_macs(self) -> int:
        return self.lanes * sum(self.real)


def fuse(
    grouped: GroupedBody, plan: RegisterPlan, machine: MachineConfig, checks: bool = True
) -> list[list[FusedOp]]:
    """Turn each group's MACs into runs of exactly ``columns`` MACs over shared registers."""
    precision = grouped.spec.precision
    cols = machine.columns(precision)
    eb = precision.nbytes
    widths = {l.gid: l.width // eb for l in plan.loads}
    out = []
    for gi, group in enumerate(grouped.groups):
        fused: list[FusedOp] = []
        for bucket in bucket_macs(group.macs, plan):
            if len(bucket) % cols and checks:
                raise CandidateRejected(
                    FUSION_REMAINDER, f"{len(bucket)} MACs share registers in group {gi}, not a multiple of {cols}"
                )
            for start in range(0, len(bucket), cols):
                run = bucket[start : start + cols]
                sel = []
                for pick in (lambda r: r.op1, lambda r: r.op2):
                    gid = plan.gid_of(pick(run[0]))
                    offsets = [plan.bindings[pick(r)].offsets for r in run]
                    sel.append((gid, solve_select(offsets, widths[gid], precision, checks)))
                fused.append(
                    FusedOp(
                        dst=f"A{gi % machine.accumulators}",
                        group=gi,
                        update=group.update,
                        lanes=grouped.lanes,
                        columns=len(run),
                        op1=sel[0],
                        op2=sel[1],
                        is_first=not fused,
                        real=tuple(r.real for r in run),
                    )
                )
        out.append(fused)
    return out


def dump_fused(fused: list[list[FusedOp]], grouped: GroupedBody) -> str:
    eo = grouped.spec.extents("O")
    lines = ["update | op | operand1 | operand2"]
    for ops in fused:
        for op in ops:
            kind = "VMUL" if op.is_first else "VMAC"
            lines.append(
                f"{op.update.render(eo)} | {kind} | SELECT({op.op1[0]}, {{{op.op1[1].pretty()}}}) "
                f"| SELECT({op.op2[0]}, {{{op.op2[1].pretty()}}})"
            )
    return "\n".join(lines) + "\n"
