"""Parameters of the abstract 2D-SIMD VLIW machine."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .conv_model import Precision


@dataclass(frozen=True)
class MachineConfig:
    # precision -> (lanes, columns); 16-bit also supports 8x4 but it is never tuned over
    lanes_columns: dict = field(
        default_factory=lambda: {Precision.I32: (8, 1), Precision.I16: (16, 2)}
    )
    register_file_bytes: int = 256
    register_widths: tuple[int, ...] = (128, 256, 512, 1024)
    memory_bytes: int = 131072
    port_bytes: int = 32
    read_ports: int = 2
    write_ports: int = 1
    scalar_slots: int = 2
    vector_slots: int = 1
    select_granularity_bits: int = 32
    alignment_bytes: int = 16
    accumulators: int = 4
    max_program_ops: int = 2048
    pipeline_charge: int = 32
    datapath_bits: int = 512

    def __post_init__(self):
        lc = {Precision(p): tuple(v) for p, v in self.lanes_columns.items()}
        object.__setattr__(self, "lanes_columns", lc)
        object.__setattr__(self, "register_widths", tuple(sorted(self.register_widths)))
        for p, (lanes, cols) in lc.items():
            if lanes < 1 or cols < 1:
                raise ValueError("lanes and columns must be positive")
            if lanes * cols * p.bits > self.datapath_bits:
                raise ValueError(f"{p.value} datapath exceeds {self.datapath_bits} bits")

    def lanes(self, precision: Precision) -> int:
        return self.lanes_columns[Precision(precision)][0]

    def columns(self, precision: Precision) -> int:
        return self.lanes_columns[Precision(precision)][1]

    def peak_macs(self, precision: Precision) -> int:
        lanes, cols = self.lanes_columns[Precision(precision)]
        return lanes * cols

    @property
    def max_register_bytes(self) -> int:
        return self.register_widths[-1] // 8

    @property
    def register_byte_widths(self) -> tuple[int, ...]:
        return tuple(w // 8 for w in self.register_widths)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lanes_columns"] = {p.value: list(v) for p, v in self.lanes_columns.items()}
        d["register_widths"] = list(self.register_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MachineConfig":
        d = dict(d)
        if "register_widths" in d:
            d["register_widths"] = tuple(d["register_widths"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "MachineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
