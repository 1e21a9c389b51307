"""Named kernel-size presets for the bundled evaluation design space.

Every kernel has a small (S) and a large (L) variant; convolution presets use
3-wide (and, for conv2d, 3-tall) filters, stride 1, no padding. 1-D
convolution shapes are one pixel tall end to end. Precision, sparsity, and
the specialize flag stay free parameters of the design point.
"""
from __future__ import annotations

from .errors import ParameterError
from .kernels import KernelConfig

_GEMM = {
    "gemmt-RP-S": ("gemmt", "row_parallel", 32),
    "gemmt-RP-L": ("gemmt", "row_parallel", 128),
    "gemmt-FU-S": ("gemmt", "fully_unrolled", 16),
    "gemmt-FU-L": ("gemmt", "fully_unrolled", 32),
    "gemms-RP-S": ("gemms", "row_parallel", 16),
    "gemms-RP-L": ("gemms", "row_parallel", 128),
}

_CONV = {
    "conv1d-PW-S": ("conv1d", "pixelwise", (32, 1, 64), 64),
    "conv1d-PW-L": ("conv1d", "pixelwise", (32, 1, 64), 128),
    "conv1d-FU-S": ("conv1d", "fully_unrolled", (32, 1, 8), 8),
    "conv1d-FU-L": ("conv1d", "fully_unrolled", (32, 1, 16), 16),
    "conv2d-PW-S": ("conv2d", "pixelwise", (25, 25, 32), 64),
    "conv2d-PW-L": ("conv2d", "pixelwise", (25, 25, 64), 64),
    "conv2d-RP-S": ("conv2d", "row_parallel", (8, 8, 8), 8),
    "conv2d-RP-L": ("conv2d", "row_parallel", (8, 8, 16), 16),
    "conv2d-FU-S": ("conv2d", "fully_unrolled", (8, 8, 4), 4),
    "conv2d-FU-L": ("conv2d", "fully_unrolled", (8, 8, 8), 8),
}

PRESET_NAMES: tuple[str, ...] = tuple(sorted((*_GEMM, *_CONV)))

# the architecture case study balances footprint and throughput
STUDY_KERNELS: tuple[str, ...] = ("gemmt-RP-S", "conv1d-PW-S", "conv2d-PW-S")


def preset_config(name: str, bits: int = 8, specialize: bool = True) -> KernelConfig:
    """Resolve a preset name plus precision into a full KernelConfig."""
    if name in _GEMM:
        family, unroll, dim = _GEMM[name]
        return KernelConfig(family, unroll, m=dim, n=dim, p=dim,
                            bits=bits, specialize=specialize)
    if name in _CONV:
        family, unroll, (iw, ih, ic), oc = _CONV[name]
        fh = 1 if family == "conv1d" else 3
        return KernelConfig(family, unroll, in_w=iw, in_h=ih, in_c=ic,
                            f_w=3, f_h=fh, out_c=oc, bits=bits, specialize=specialize)
    raise ParameterError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")
