"""Convolution workloads, deterministic test tensors and the scalar reference oracle.

Every tensor is held in a canonical five-dimensional shape so that CONV1D,
CONV2D and CONV3D share one code path (unused dimensions have extent 1):

    output  O: (n, k, z, y, x)
    weights W: (k, c, t, s, r)
    input   I: (n, c, z', y', x')

For depth-wise (DS) convolutions the input channel axis has extent K and
output channel ``k`` reads input channel ``k``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InvalidSpec, SpecMismatch


class Kind(str, Enum):
    CONV1D = "CONV1D"
    CONV2D = "CONV2D"
    CONV3D = "CONV3D"


class Variant(str, Enum):
    REG = "REG"
    PW = "PW"
    FC = "FC"
    SS = "SS"
    DS = "DS"


class Precision(str, Enum):
    I16 = "I16"
    I32 = "I32"

    @property
    def bits(self) -> int:
        return 16 if self is Precision.I16 else 32

    @property
    def nbytes(self) -> int:
        return self.bits // 8

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.int16 if self is Precision.I16 else np.int32)


OUTPUT_DIMS = ("n", "k", "z", "y", "x")
WEIGHT_DIMS = ("k", "c", "t", "s", "r")
INPUT_DIMS = ("n", "c", "z", "y", "x")
TENSOR_DIMS = {"O": OUTPUT_DIMS, "W": WEIGHT_DIMS, "I": INPUT_DIMS}


@dataclass(frozen=True)
class ConvSpec:
    kind: Kind = Kind.CONV2D
    variant: Variant = Variant.REG
    x: int = 1
    y: int = 1
    k: int = 1
    n: int = 1
    r: int = 1
    s: int = 1
    t: int = 1
    c: int = 1
    z: int = 1
    stride: int = 1
    precision: Precision = Precision.I16

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "precision", Precision(self.precision))
        self.check()

    # derived input extents (valid convolution, no implicit padding)
    @property
    def in_x(self) -> int:
        return (self.x - 1) * self.stride + self.r

    @property
    def in_y(self) -> int:
        return (self.y - 1) * self.stride + self.s

    @property
    def in_z(self) -> int:
        return (self.z - 1) * self.stride + self.t

    @property
    def in_c(self) -> int:
        return self.k if self.variant is Variant.DS else self.c

    def check(self) -> None:
        for name in ("x", "y", "k", "n", "r", "s", "t", "c", "z", "stride"):
            if getattr(self, name) < 1:
                raise InvalidSpec(f"{name} must be >= 1")
        if self.kind is not Kind.CONV3D and (self.t != 1 or self.z != 1):
            raise InvalidSpec("t and z are only meaningful for CONV3D")
        if self.kind is Kind.CONV1D and (self.s != 1 or self.y != 1):
            raise InvalidSpec("CONV1D has no height dimension")
        if self.variant is not Variant.REG and self.kind is not Kind.CONV2D:
            raise InvalidSpec("variants other than REG apply to CONV2D only")
        v = self.variant
        if v is Variant.PW and not (self.r == 1 and self.s == 1):
            raise InvalidSpec("PW requires R = S = 1")
        if v is Variant.FC and not (self.r == self.in_x and self.s == self.in_y):
            raise InvalidSpec("FC requires R = X' and S = Y'")
        if v is Variant.SS and not (self.r == 1 or self.s == 1):
            raise InvalidSpec("SS requires R = 1 or S = 1")
        if v is Variant.DS and self.c != 1:
            raise InvalidSpec("DS requires C = 1")

    def tensor_shape(self, tensor: str) -> tuple[int, ...]:
        if tensor == "O":
            return (self.n, self.k, self.z, self.y, self.x)
        if tensor == "W":
            return (self.k, self.c, self.t, self.s, self.r)
        if tensor == "I":
            return (self.n, self.in_c, self.in_z, self.in_y, self.in_x)
        raise KeyError(tensor)

    def extents(self, tensor: str) -> dict[str, int]:
        return dict(zip(TENSOR_DIMS[tensor], self.tensor_shape(tensor)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "variant": self.variant.value,
            "dims": {d: getattr(self, d) for d in ("x", "y", "z", "k", "n", "r", "s", "t", "c")},
            "stride": self.stride,
            "precision": self.precision.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ConvSpec":
        dims = dict(d.get("dims", {}))
        unknown = set(dims) - {"x", "y", "z", "k", "n", "r", "s", "t", "c"}
        if unknown:
            raise InvalidSpec(f"unknown dims {sorted(unknown)}")
        return cls(
            kind=d.get("kind", "CONV2D"),
            variant=d.get("variant", "REG"),
            stride=int(d.get("stride", 1)),
            precision=d.get("precision", "I16"),
            **{k: int(v) for k, v in dims.items()},
        )

    @property
    def label(self) -> str:
        shape = f"{self.x}x{self.y}" + (f"x{self.z}" if self.kind is Kind.CONV3D else "")
        flt = f"{self.r}x{self.s}" + (f"x{self.t}" if self.kind is Kind.CONV3D else "")
        return (
            f"{self.kind.value}-{self.variant.value}-{shape}-k{self.k}-c{self.c}-n{self.n}"
            f"-f{flt}-s{self.stride}-{self.precision.value}"
        )


@dataclass(frozen=True)
class TensorData:
    """Integer tensor stored in canonical row-major order."""

    dims: tuple[tuple[str, int], ...]
    precision: Precision
    values: np.ndarray = field(compare=False, repr=False)

    def __post_init__(self):
        shape = tuple(e for _, e in self.dims)
        if self.values.shape != shape:
            raise SpecMismatch(f"values shape {self.values.shape} != dims {shape}")
        if self.values.dtype != self.precision.dtype:
            raise SpecMismatch(f"dtype {self.values.dtype} != {self.precision.dtype}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1)

    def equals(self, other: "TensorData") -> bool:
        return self.dims == other.dims and np.array_equal(self.values, other.values)

    def checksum(self) -> str:
        raw = self.values.astype("<i8").tobytes()
        return hashlib.sha256(raw).hexdigest()[:16]


@dataclass(frozen=True)
class Workload:
    spec: ConvSpec
    input: TensorData
    weights: TensorData
    seed: int


_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def splitmix64(seed: int, count: int) -> np.ndarray:
    """``count`` consecutive outputs of the splitmix64 generator started at ``seed``."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def fill_values(seed: int, stream: int, shape: tuple[int, ...]) -> np.ndarray:
    """Deterministic integers in [-128, 127]: top byte of splitmix64 minus 128."""
    start = (seed * 0x100000001B3 + stream * _GOLDEN) & _MASK
    raw = splitmix64(start, int(np.prod(shape)))
    return ((raw >> np.uint64(56)).astype(np.int64) - 128).reshape(shape)


def _tensor(spec: ConvSpec, name: str, values: np.ndarray) -> TensorData:
    dims = tuple(zip(TENSOR_DIMS[name], spec.tensor_shape(name)))
    return TensorData(dims, spec.precision, values.astype(spec.precision.dtype))


def make_workload(spec: ConvSpec, seed: int) -> Workload:
    inp = fill_values(seed, 1, spec.tensor_shape("I"))
    wts = fill_values(seed, 2, spec.tensor_shape("W"))
    return Workload(spec, _tensor(spec, "I", inp), _tensor(spec, "W", wts), seed)


def total_macs(spec: ConvSpec) -> int:
    return spec.x * spec.y * spec.z * spec.k * spec.n * spec.r * spec.s * spec.t * spec.c


def _check_dims(spec: ConvSpec, tensor: TensorData, name: str) -> None:
    expected = tuple(zip(TENSOR_DIMS[name], spec.tensor_shape(name)))
    if tensor.dims != expected:
        raise SpecMismatch(f"{name} dims {tensor.dims} do not match spec {expected}")


def reference_convolve(spec: ConvSpec, input: TensorData, weights: TensorData) -> TensorData:
    """Exact output tensor: 64-bit accumulation, truncated to the spec precision."""
    _check_dims(spec, input, "I")
    _check_dims(spec, weights, "W")
    f = spec.stride
    inp = input.values.astype(np.int64)
    wts = weights.values.astype(np.int64)
    acc = np.zeros(spec.tensor_shape("O"), dtype=np.int64)
    zs, ys, xs = (spec.z - 1) * f + 1, (spec.y - 1) * f + 1, (spec.x - 1) * f + 1
    for t in range(spec.t):
        for s in range(spec.s):
            for r in range(spec.r):
                window = inp[:, :, t : t + zs : f, s : s + ys : f, r : r + xs : f]
                w = wts[:, :, t, s, r]
                if spec.variant is Variant.DS:
                    acc += window * w[:, 0][None, :, None, None, None]
                else:
                    acc += np.einsum("nczyx,kc->nkzyx", window, w)
    return _tensor(spec, "O", acc)


def with_padded_filter(spec: ConvSpec, r: int) -> ConvSpec:
    """Same spec with filter width ``r`` (zero columns appended by the caller)."""
    try:
        return replace(spec, r=r)
    except InvalidSpec:
        # a widened PW/FC/SS filter no longer satisfies its variant constraint
        return replace(spec, variant=Variant.REG, r=r)


def load_spec_file(path: str | Path) -> tuple[ConvSpec, int]:
    """Read a workload JSON file; returns the spec and its seed (default 0)."""
    data = json.loads(Path(path).read_text())
    return ConvSpec.from_dict(data), int(data.get("seed", 0))


def spec_to_json(spec: ConvSpec, seed: int | None = None) -> str:
    d = spec.to_dict()
    if seed is not None:
        d["seed"] = seed
    return json.dumps(d, indent=2, sort_keys=True)
