"""Reproducible integer tensor generation with prescribed sparsity and bit width.

Weights and inputs are drawn from split PCG64 streams so that every tensor is a
pure function of (shape, bits, sparsity, seed); the weight and input draws of
one seed never overlap. Widths >= 2 use signed two's complement; 1-bit tensors
are unsigned {0, 1} and multiplication degenerates to a logical AND downstream.

Zero placement uses a seed-fixed permutation prefix, so for a fixed seed the
zero set at sparsity s1 is a subset of the zero set at any s2 >= s1. Structural
sparsity sweeps therefore prune monotonically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError

_WEIGHT_STREAM = 0
_INPUT_STREAM = 1


def _rng(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(stream,))
    return np.random.Generator(np.random.PCG64(ss))


def value_range(bits: int) -> tuple[int, int]:
    """Inclusive [lo, hi] representable by ``bits``; {0, 1} when bits == 1."""
    if not isinstance(bits, int) or bits < 1:
        raise ParameterError(f"precision must be an integer >= 1, got {bits!r}")
    if bits == 1:
        return 0, 1
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _check_shape(shape: Iterable[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if not dims or any(d < 1 for d in dims):
        raise ShapeError(f"all extents must be >= 1, got {dims}")
    return dims


def _flat_index(shape: Sequence[int], idx: Sequence[int]) -> int:
    if len(idx) != len(shape):
        raise ShapeError(f"index {idx} does not match shape {shape}")
    flat = 0
    for extent, i in zip(shape, idx):
        if not 0 <= i < extent:
            raise ShapeError(f"index {idx} out of range for shape {shape}")
        flat = flat * extent + i
    return flat


@dataclass(frozen=True)
class WeightTensor:
    """Fixed integer weights: the constants baked into generated hardware."""

    shape: tuple[int, ...]
    bits: int
    sparsity: float
    seed: int
    values: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def nnz(self) -> int:
        return sum(1 for v in self.values if v != 0)

    @property
    def zero_count(self) -> int:
        return self.size - self.nnz

    def __getitem__(self, idx) -> int:
        if isinstance(idx, int):
            return self.values[idx]
        return self.values[_flat_index(self.shape, idx)]


@dataclass(frozen=True)
class InputStimulus:
    """Random input operands used for simulation and testbench generation."""

    shape: tuple[int, ...]
    bits: int
    seed: int
    values: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.values)

    def __getitem__(self, idx) -> int:
        if isinstance(idx, int):
            return self.values[idx]
        return self.values[_flat_index(self.shape, idx)]


def generate_weights(shape: Iterable[int], sparsity: float, bits: int, seed: int = 0) -> WeightTensor:
    """Draw a weight tensor with exactly round-half-up(sparsity * size) zeros.

    Zero positions are a permutation prefix under the seed; nonzero values are
    uniform over the nonzero representable set for ``bits``.
    """
    dims = _check_shape(shape)
    if not 0.0 <= float(sparsity) <= 1.0:
        raise ParameterError(f"sparsity must lie in [0, 1], got {sparsity}")
    lo, hi = value_range(bits)
    total = math.prod(dims)
    n_zero = round_half_up(float(sparsity) * total)
    rng = _rng(seed, _WEIGHT_STREAM)
    zero_at = rng.permutation(total)[:n_zero]
    if bits == 1:
        vals = np.ones(total, dtype=np.int64)
    else:
        # nonzero set has 2^bits - 1 members: [lo, -1] then [1, hi]
        draw = rng.integers(0, (1 << bits) - 1, size=total)
        half = 1 << (bits - 1)
        vals = np.where(draw < half, draw - half, draw - half + 1)
    vals[zero_at] = 0
    return WeightTensor(dims, bits, float(sparsity), int(seed), tuple(int(v) for v in vals))


def generate_inputs(shape: Iterable[int], bits: int, seed: int = 0) -> InputStimulus:
    """Uniform values over the full representable range, reproducible per seed."""
    dims = _check_shape(shape)
    lo, hi = value_range(bits)
    rng = _rng(seed, _INPUT_STREAM)
    vals = rng.integers(lo, hi + 1, size=math.prod(dims))
    return InputStimulus(dims, bits, int(seed), tuple(int(v) for v in vals))


def sparsity_grid() -> list[float]:
    """The standard sweep grid: ten evenly spaced points from 0.0 to 0.9."""
    return [i / 10 for i in range(10)]


def dump_tensor(tensor: WeightTensor | InputStimulus, path) -> None:
    """Self-describing text dump: header lines, then row-major integers."""
    with open(path, "w") as fh:
        fh.write("shape " + " ".join(str(d) for d in tensor.shape) + "\n")
        fh.write(f"bits {tensor.bits}\n")
        if isinstance(tensor, WeightTensor):
            fh.write(f"sparsity {tensor.sparsity}\n")
        fh.write(f"seed {tensor.seed}\n")
        vals = tensor.values
        for start in range(0, len(vals), 16):
            fh.write(" ".join(str(v) for v in vals[start:start + 16]) + "\n")


def load_tensor(path) -> WeightTensor | InputStimulus:
    """Inverse of :func:`dump_tensor`."""
    header: dict[str, str] = {}
    values: list[int] = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] in ("shape", "bits", "sparsity", "seed"):
                header[parts[0]] = " ".join(parts[1:])
            else:
                values.extend(int(p) for p in parts)
    shape = tuple(int(d) for d in header["shape"].split())
    bits = int(header["bits"])
    seed = int(header.get("seed", "0"))
    if math.prod(shape) != len(values):
        raise ShapeError(f"file holds {len(values)} values for shape {shape}")
    if "sparsity" in header:
        return WeightTensor(shape, bits, float(header["sparsity"]), seed, tuple(values))
    return InputStimulus(shape, bits, seed, tuple(values))
