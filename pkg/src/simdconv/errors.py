"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class SimdConvError(Exception):
    """Base class for all package errors."""


class InvalidSpec(SimdConvError):
    pass


class SpecMismatch(SimdConvError):
    """Tensor dimensions disagree with the convolution spec."""


class OutOfBounds(SimdConvError, IndexError):
    pass


class NoCandidates(SimdConvError):
    """The pruned schedule space is empty."""


class InternalError(SimdConvError):
    pass


class InternalMiscompile(SimdConvError):
    """A compiled candidate disagreed with the reference oracle (a compiler bug)."""


class MemoryFault(SimdConvError):
    def __init__(self, instr_id: int | None, detail: str = ""):
        super().__init__(f"memory fault at instruction {instr_id}: {detail}")
        self.instr_id = instr_id
        self.detail = detail

    def __reduce__(self):
        return (type(self), (self.instr_id, self.detail))


# Machine-checkable rejection reasons carried by CandidateRejected.
ALIGNMENT = "alignment"
LAYOUT = "layout"
OVERSIZED = "oversized-component"
SELECT_INFEASIBLE = "select-infeasible"
FUSION_REMAINDER = "fusion-remainder"
REGISTER_PRESSURE = "register-pressure"
ACCUMULATOR_PRESSURE = "accumulator-pressure"
PROGRAM_SIZE = "program-size"
MEMORY_CAPACITY = "memory-capacity"
INVALID_SCHEDULE = "invalid-schedule"

REJECTION_REASONS = (
    ALIGNMENT,
    LAYOUT,
    OVERSIZED,
    SELECT_INFEASIBLE,
    FUSION_REMAINDER,
    REGISTER_PRESSURE,
    ACCUMULATOR_PRESSURE,
    PROGRAM_SIZE,
    MEMORY_CAPACITY,
    INVALID_SCHEDULE,
)


class CandidateRejected(SimdConvError):
    """A schedule cannot be realized on the machine; carries a reason code."""

    def __init__(self, reason: str, detail: str = ""):
        assert reason in REJECTION_REASONS, reason
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail

    def __reduce__(self):
        return (CandidateRejected, (self.reason, self.detail))


class SelectInfeasible(CandidateRejected):
    def __init__(self, detail: str = ""):
        super().__init__(SELECT_INFEASIBLE, detail)
