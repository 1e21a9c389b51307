"""Reference integer models the hardware must match bit-exactly.

Accumulation uses unbounded Python integers, so there is no tolerance: graph
widths are sized to be overflow-free and equality is exact. Convolution is
cross-correlation (no kernel flip), stride 1, no padding.
"""
from __future__ import annotations

from typing import Sequence

from .errors import ShapeError
from .kernels import KernelConfig
from .tensors import InputStimulus, WeightTensor


def golden_gemm(x: Sequence[Sequence[int]], w: Sequence[Sequence[int]]) -> list[list[int]]:
    """Exact m x n times n x p integer product."""
    m = len(x)
    n = len(x[0]) if m else 0
    if any(len(row) != n for row in x):
        raise ShapeError("ragged input matrix")
    if len(w) != n:
        raise ShapeError(f"inner dims disagree: x is mx{n}, w has {len(w)} rows")
    p = len(w[0]) if n else 0
    if any(len(row) != p for row in w):
        raise ShapeError("ragged weight matrix")
    out = [[0] * p for _ in range(m)]
    for r in range(m):
        for j in range(p):
            acc = 0
            for i in range(n):
                acc += x[r][i] * w[i][j]
            out[r][j] = acc
    return out


def golden_conv(x, f, in_shape: tuple[int, int, int], f_shape: tuple[int, int, int, int]) -> list[int]:
    """Channel-summed sliding-window product over flat row-major tensors.

    ``x`` has shape (in_w, in_h, in_c), ``f`` has (f_w, f_h, in_c, out_c);
    returns the (out_w, out_h, out_c) result flattened row-major.
    """
    in_w, in_h, in_c = in_shape
    f_w, f_h, fin_c, out_c = f_shape
    if fin_c != in_c:
        raise ShapeError(f"filter channels {fin_c} != input channels {in_c}")
    out_w, out_h = in_w - f_w + 1, in_h - f_h + 1
    if out_w < 1 or out_h < 1:
        raise ShapeError("filter larger than input")
    if len(x) != in_w * in_h * in_c or len(f) != f_w * f_h * in_c * out_c:
        raise ShapeError("flat tensor sizes do not match the declared shapes")
    out = [0] * (out_w * out_h * out_c)
    for ox in range(out_w):
        for oy in range(out_h):
            for oc in range(out_c):
                acc = 0
                for dx in range(f_w):
                    for dy in range(f_h):
                        base_x = ((ox + dx) * in_h + (oy + dy)) * in_c
                        base_f = ((dx * f_h + dy) * in_c) * out_c + oc
                        for c in range(in_c):
                            acc += x[base_x + c] * f[base_f + c * out_c]
                out[(ox * out_h + oy) * out_c + oc] = acc
    return out


def golden_outputs(cfg: KernelConfig, weights: WeightTensor, stim: InputStimulus) -> list[int]:
    """Expected output tensor, flattened in the kernel's output-port order."""
    if stim.shape != cfg.input_shape():
        raise ShapeError(f"stimulus {stim.shape} does not match kernel input {cfg.input_shape()}")
    if cfg.is_conv:
        return golden_conv(stim.values, weights.values,
                           cfg.input_shape(), cfg.weight_shape())
    x = [[stim[r, i] for i in range(cfg.n)] for r in range(cfg.m)]
    w = [[weights[i, j] for j in range(cfg.p)] for i in range(cfg.n)]
    y = golden_gemm(x, w)
    return [y[r][j] for r in range(cfg.m) for j in range(cfg.p)]
