"""Kernel netlist builders and the pipelining pass.

Supported kernels (family x input-unrolling, with per-cycle I/O and weight
duplication):

    gemmt   row_parallel    1xn in, 1xp out
    gemmt   fully_unrolled  mxn in, mxp out, weights duplicated m times
    gemms   row_parallel    1xn in, 1xp out (weight-stationary systolic)
    conv1d  pixelwise       Fw x 1 x Ic window in, 1 x 1 x Oc out
    conv1d  fully_unrolled  whole input in, Ow x 1 x Oc out, duplicated Ow
    conv2d  pixelwise       Fw x Fh x Ic window in, 1 x 1 x Oc out
    conv2d  row_parallel    Iw x Fh x Ic window in, Ow x 1 x Oc out, dup Ow
    conv2d  fully_unrolled  whole input in, whole output out, dup Ow*Oh

All tree kernels share one engine shape: a constant multiplier per nonzero
weight feeding a balanced binary adder tree (leaves in index order). The
pipelining pass registers every add/sub, pads reconvergent operands with delay
chains, and records per-output register latencies. Multiplier leaves of
unequal depth are equalized on the cheap side (input-width delay ladders
shared across an engine) rather than on the wide product side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import ParameterError, ShapeError
from .graph import ARITH_KINDS, DataflowGraph
from .multiplier import build_multiplier, combine_signed, mult_depth
from .tensors import WeightTensor

VALID_PAIRS = frozenset({
    ("gemmt", "row_parallel"), ("gemmt", "fully_unrolled"),
    ("gemms", "row_parallel"),
    ("conv1d", "pixelwise"), ("conv1d", "fully_unrolled"),
    ("conv2d", "pixelwise"), ("conv2d", "row_parallel"), ("conv2d", "fully_unrolled"),
})


@dataclass(frozen=True)
class KernelConfig:
    """One design point: kernel family, unrolling, shapes, precision."""

    family: str
    unroll: str
    m: int | None = None
    n: int | None = None
    p: int | None = None
    in_w: int | None = None
    in_h: int | None = None
    in_c: int | None = None
    f_w: int | None = None
    f_h: int | None = None
    out_c: int | None = None
    bits: int = 8
    specialize: bool = True

    def __post_init__(self):
        if (self.family, self.unroll) not in VALID_PAIRS:
            raise ParameterError(f"unsupported kernel {self.family}/{self.unroll}")
        if self.bits < 1:
            raise ParameterError(f"precision must be >= 1, got {self.bits}")
        if self.family in ("gemmt", "gemms"):
            if self.family == "gemmt" and self.unroll == "row_parallel" and self.m is None:
                object.__setattr__(self, "m", 1)
            if self.family == "gemms" and self.m is None:
                object.__setattr__(self, "m", 1)
            if not all(isinstance(v, int) and v >= 1 for v in (self.m, self.n, self.p)):
                raise ParameterError("gemm dims m, n, p must be integers >= 1")
        else:
            if self.family == "conv1d":
                if self.in_h not in (None, 1) or self.f_h not in (None, 1):
                    raise ParameterError("conv1d requires in_h == f_h == 1")
                object.__setattr__(self, "in_h", 1)
                object.__setattr__(self, "f_h", 1)
            dims = (self.in_w, self.in_h, self.in_c, self.f_w, self.f_h, self.out_c)
            if not all(isinstance(v, int) and v >= 1 for v in dims):
                raise ParameterError("conv dims must be integers >= 1")
            if self.out_w < 1 or self.out_h < 1:
                raise ParameterError(
                    f"output dims must be >= 1 (stride 1, no padding): "
                    f"{self.out_w}x{self.out_h}")

    @property
    def is_conv(self) -> bool:
        return self.family in ("conv1d", "conv2d")

    @property
    def out_w(self) -> int:
        return self.in_w - self.f_w + 1

    @property
    def out_h(self) -> int:
        return self.in_h - self.f_h + 1

    def weight_shape(self) -> tuple[int, ...]:
        if self.is_conv:
            return (self.f_w, self.f_h, self.in_c, self.out_c)
        return (self.n, self.p)

    def input_shape(self) -> tuple[int, ...]:
        if self.is_conv:
            return (self.in_w, self.in_h, self.in_c)
        return (self.m, self.n)

    def output_shape(self) -> tuple[int, ...]:
        if self.is_conv:
            return (self.out_w, self.out_h, self.out_c)
        return (self.m, self.p)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ThroughputContract:
    inputs_per_cycle: tuple[int, ...]
    outputs_per_cycle: tuple[int, ...]
    weight_duplication: int


def expected_contract(cfg: KernelConfig) -> ThroughputContract:
    """Per-cycle I/O shape and weight duplication for each supported kernel."""
    f, u = cfg.family, cfg.unroll
    if f == "gemmt" and u == "row_parallel":
        return ThroughputContract((1, cfg.n), (1, cfg.p), 1)
    if f == "gemmt" and u == "fully_unrolled":
        # one independent row engine per input row: m x p results per cycle
        return ThroughputContract((cfg.m, cfg.n), (cfg.m, cfg.p), cfg.m)
    if f == "gemms":
        return ThroughputContract((1, cfg.n), (1, cfg.p), 1)
    if u == "pixelwise":
        return ThroughputContract((cfg.f_w, cfg.f_h, cfg.in_c), (1, 1, cfg.out_c), 1)
    if u == "row_parallel":
        return ThroughputContract((cfg.in_w, cfg.f_h, cfg.in_c), (cfg.out_w, 1, cfg.out_c), cfg.out_w)
    return ThroughputContract(
        (cfg.in_w, cfg.in_h, cfg.in_c),
        (cfg.out_w, cfg.out_h, cfg.out_c),
        cfg.out_w * cfg.out_h,
    )


def throughput_contract(g: DataflowGraph) -> ThroughputContract:
    """Realized contract of a built graph, cross-checked against its ports."""
    meta = g.metadata
    out_shape = tuple(meta["outputs_per_cycle"])
    if len(g.outputs) != math.prod(out_shape):
        raise ShapeError("output port count disagrees with realized contract")
    in_shape = tuple(meta["inputs_per_cycle"])
    if meta["unroll"] != "pixelwise" and len(g.inputs) != math.prod(meta["ports_per_beat"]):
        raise ShapeError("input port count disagrees with realized contract")
    return ThroughputContract(in_shape, out_shape, int(meta["duplication"]))


class _DelayLadder:
    """Shared delayed copies of a signal, one register per step."""

    def __init__(self, g: DataflowGraph):
        self.g = g
        self.taps: dict[tuple[int, int], int] = {}

    def tap(self, src: int, delay: int) -> int:
        if delay <= 0:
            return src
        key = (src, delay)
        if key not in self.taps:
            prev = self.tap(src, delay - 1)
            self.taps[key] = self.g.add("register", self.g.node(prev).width, (prev,))
        return self.taps[key]


def _tree(g: DataflowGraph, leaves: list[tuple[int, int]], product_width: int) -> int:
    """Balanced adder tree over signed product leaves; 0-constant when empty.

    Level k nodes are product_width + k wide, so a dense tree's root carries
    the full accumulator width product_width + ceil(log2 leaves).
    """
    if not leaves:
        return g.add("constant", 1, value=0)
    root, sign, _ = combine_signed(
        g, leaves,
        lambda level, a, b: max(product_width + level,
                                g.node(a).width, g.node(b).width),
        wrule="fixed")
    if sign < 0:
        zero = g.add("constant", 1, value=0)
        root = g.add("sub", g.node(root).width + 1, (zero, root), wrule="max1")
    return root


def _signed_bits(magnitude: int) -> int:
    return max(int(magnitude).bit_length() + 1, 1)


def build_kernel(cfg: KernelConfig, weights: WeightTensor) -> DataflowGraph:
    """Build, pipeline, and validate the netlist for one design point."""
    if weights.shape != cfg.weight_shape():
        raise ShapeError(f"weights {weights.shape} do not match kernel {cfg.weight_shape()}")
    if weights.bits != cfg.bits:
        raise ShapeError(f"weight precision {weights.bits} != kernel precision {cfg.bits}")
    if cfg.family == "gemmt":
        g = _build_gemmt(cfg, weights)
    elif cfg.family == "gemms":
        g = _build_gemms(cfg, weights)
    else:
        g = _build_conv(cfg, weights)
    g.metadata["config"] = cfg.to_dict()
    g.metadata["nnz_used"] = weights.nnz
    g.metadata["weights_seed"] = weights.seed
    g.metadata["weights_sparsity"] = weights.sparsity
    g.metadata["family"] = cfg.family
    g.metadata["unroll"] = cfg.unroll
    pipeline(g, align_outputs=cfg.family != "gemms")
    g.validate()
    return g


def build_gemmt(cfg: KernelConfig, weights: WeightTensor) -> DataflowGraph:
    if cfg.family != "gemmt":
        raise ParameterError("build_gemmt expects a gemmt config")
    return build_kernel(cfg, weights)


def build_gemms(cfg: KernelConfig, weights: WeightTensor) -> DataflowGraph:
    if cfg.family != "gemms":
        raise ParameterError("build_gemms expects a gemms config")
    return build_kernel(cfg, weights)


def build_conv(cfg: KernelConfig, weights: WeightTensor) -> DataflowGraph:
    if not cfg.is_conv:
        raise ParameterError("build_conv expects a conv1d/conv2d config")
    return build_kernel(cfg, weights)


def _max_mult_depth(weights: WeightTensor, cfg: KernelConfig) -> int:
    if not cfg.specialize:
        return mult_depth(0, cfg.bits, specialize=False)
    return max((mult_depth(w, cfg.bits, True) for w in weights.values if w), default=0)


def _engine_tree(g, ladder, taps_signed, max_depth, cfg, counters) -> int:
    """One output channel: multipliers over nonzero taps feeding a tree.

    ``taps_signed`` yields (source nid, weight); zero weights are pruned when
    specializing. Every leaf is delayed so all products finish at max_depth.
    """
    product_width = 1 if cfg.bits == 1 else 2 * cfg.bits
    leaves: list[tuple[int, int]] = []
    for src, w in taps_signed:
        if cfg.specialize and w == 0:
            continue
        d = mult_depth(w, cfg.bits, cfg.specialize)
        root, sign, _ = build_multiplier(
            g, ladder.tap(src, max_depth - d), w, cfg.bits, cfg.specialize)
        counters["multipliers"] += 1
        if root is not None:
            leaves.append((root, sign))
    return _tree(g, leaves, product_width)


def _build_gemmt(cfg: KernelConfig, weights: WeightTensor) -> DataflowGraph:
    g = DataflowGraph()
    full = cfg.unroll == "fully_unrolled"
    rows = cfg.m if full else 1
    ports = [[g.add("input_port", cfg.bits, name=f"x_r{r}_c{i}" if full else f"x_{i}")
              for i in range(cfg.n)] for r in range(rows)]
    ladder = _DelayLadder(g)
    max_d = _max_mult_depth(weights, cfg)
    counters = {"multipliers": 0}
    for r in range(rows):
        for j in range(cfg.p):
            taps = ((ports[r][i], weights[i, j]) for i in range(cfg.n))
            root = _engine_tree(g, ladder, taps, max_d, cfg, counters)
            name = f"y_r{r}_c{j}" if full else f"y_{j}"
            g.add("output_port", g.node(root).width, (root,), name=name)
    g.metadata.update(
        duplication=cfg.m if full else 1,
        multiplier_count=counters["multipliers"],
        inputs_per_cycle=(cfg.m, cfg.n) if full else (1, cfg.n),
        outputs_per_cycle=(cfg.m, cfg.p) if full else (1, cfg.p),
        ports_per_beat=(cfg.m, cfg.n) if full else (1, cfg.n),
        beats=1 if full else cfg.m,
        memory_bits=0,
        warmup=0,
    )
    return g


def _build_gemms(cfg: KernelConfig, weights: WeightTensor) -> DataflowGraph:
    g = DataflowGraph()
    ports = [g.add("input_port", cfg.bits, name=f"x_{i}") for i in range(cfg.n)]
    ladder = _DelayLadder(g)
    max_d = _max_mult_depth(weights, cfg)
    in_mag = 1 << max(cfg.bits - 1, 0) if cfg.bits > 1 else 1
    mult_count = 0

    # the partial-sum bus is structural: uniform worst-case column width,
    # independent of the weight values actually present
    psum_width = _signed_bits(cfg.n * in_mag * in_mag)

    # boundary skew: row i enters i cycles late so partial sums meet products
    skew = [p if i == 0 else g.add("shift_register_chain", cfg.bits, (p,), depth=i)
            for i, p in enumerate(ports)]
    psum: list[int] = [g.add("constant", psum_width, value=0) for _ in range(cfg.p)]
    for i in range(cfg.n):
        x_cur = skew[i]
        for j in range(cfg.p):
            w = weights[i, j]
            x_next = g.add("register", cfg.bits, (x_cur,)) if j < cfg.p - 1 else x_cur
            if cfg.specialize and w == 0:
                # pruned PE: multiplier and adder gone, stage register retained
                psum[j] = g.add("register", g.node(psum[j]).width, (psum[j],))
            else:
                d = mult_depth(w, cfg.bits, cfg.specialize)
                root, sign, _ = build_multiplier(
                    g, ladder.tap(x_cur, max_d - d), w, cfg.bits, cfg.specialize)
                mult_count += 1
                width = max(psum_width, g.node(psum[j]).width, g.node(root).width)
                kind = "add" if sign > 0 else "sub"
                psum[j] = g.add(kind, width, (psum[j], root), wrule="fixed")
            x_cur = x_next
    for j in range(cfg.p):
        g.add("output_port", g.node(psum[j]).width, (psum[j],), name=f"y_{j}")
    g.metadata.update(
        duplication=1,
        multiplier_count=mult_count,
        inputs_per_cycle=(1, cfg.n),
        outputs_per_cycle=(1, cfg.p),
        ports_per_beat=(1, cfg.n),
        beats=cfg.m,
        memory_bits=0,
        warmup=0,
    )
    return g


def _build_conv(cfg: KernelConfig, weights: WeightTensor) -> DataflowGraph:
    g = DataflowGraph()
    taps: dict[tuple[int, int, int], int] = {}
    if cfg.unroll == "pixelwise":
        pixels = cfg.out_w * cfg.out_h
        ctr = g.add("counter", max(1, math.ceil(math.log2(max(pixels, 2)))), period=pixels)
        for dx in range(cfg.f_w):
            for dy in range(cfg.f_h):
                for c in range(cfg.in_c):
                    if cfg.specialize and not any(
                            weights[dx, dy, c, oc] for oc in range(cfg.out_c)):
                        continue
                    taps[(dx, dy, c)] = g.add(
                        "memory", cfg.bits, (ctr,), tap=(dx, dy, c),
                        buffer=(cfg.in_w, cfg.in_h, cfg.in_c))
        engines = [(0, 0)]
        tap_of = lambda ox, oy, dx, dy, c: taps[(dx, dy, c)]
        memory_bits = cfg.in_w * cfg.in_h * cfg.in_c * cfg.bits
        ports_per_beat = (0,)
    elif cfg.unroll == "row_parallel":
        ports = {(ix, c): g.add("input_port", cfg.bits, name=f"in_x{ix}_c{c}")
                 for ix in range(cfg.in_w) for c in range(cfg.in_c)}
        for ix in range(cfg.in_w):
            for c in range(cfg.in_c):
                # one tapped register cascade per pixel stream buffers the
                # window: older rows sit deeper, all taps are co-timed
                cascade = [ports[(ix, c)]]
                for _ in range(cfg.f_h - 1):
                    cascade.append(g.add("register", cfg.bits, (cascade[-1],),
                                         structural=True))
                for dy in range(cfg.f_h):
                    taps[(ix, dy, c)] = cascade[cfg.f_h - 1 - dy]
        engines = [(ox, 0) for ox in range(cfg.out_w)]
        tap_of = lambda ox, oy, dx, dy, c: taps[(ox + dx, dy, c)]
        memory_bits = 0
        ports_per_beat = (cfg.in_w, 1, cfg.in_c)
    else:  # fully_unrolled
        ports = {(ix, iy, c): g.add("input_port", cfg.bits, name=f"in_x{ix}_y{iy}_c{c}")
                 for ix in range(cfg.in_w) for iy in range(cfg.in_h)
                 for c in range(cfg.in_c)}
        taps = None
        engines = [(ox, oy) for ox in range(cfg.out_w) for oy in range(cfg.out_h)]
        tap_of = lambda ox, oy, dx, dy, c: ports[(ox + dx, oy + dy, c)]
        memory_bits = 0
        ports_per_beat = (cfg.in_w, cfg.in_h, cfg.in_c)

    ladder = _DelayLadder(g)
    max_d = _max_mult_depth(weights, cfg)
    counters = {"multipliers": 0}
    for ox, oy in engines:
        for oc in range(cfg.out_c):
            leaf_iter = ((tap_of(ox, oy, dx, dy, c), weights[dx, dy, c, oc])
                         for dx in range(cfg.f_w)
                         for dy in range(cfg.f_h)
                         for c in range(cfg.in_c)
                         if not (cfg.specialize and weights[dx, dy, c, oc] == 0))
            root = _engine_tree(g, ladder, leaf_iter, max_d, cfg, counters)
            if cfg.unroll == "pixelwise":
                name = f"out_c{oc}"
            elif cfg.unroll == "row_parallel":
                name = f"out_x{ox}_c{oc}"
            else:
                name = f"out_x{ox}_y{oy}_c{oc}"
            g.add("output_port", g.node(root).width, (root,), name=name)

    dup = {"pixelwise": 1, "row_parallel": cfg.out_w,
           "fully_unrolled": cfg.out_w * cfg.out_h}[cfg.unroll]
    outs = {"pixelwise": (1, 1, cfg.out_c),
            "row_parallel": (cfg.out_w, 1, cfg.out_c),
            "fully_unrolled": (cfg.out_w, cfg.out_h, cfg.out_c)}[cfg.unroll]
    ins = {"pixelwise": (cfg.f_w, cfg.f_h, cfg.in_c),
           "row_parallel": (cfg.in_w, cfg.f_h, cfg.in_c),
           "fully_unrolled": (cfg.in_w, cfg.in_h, cfg.in_c)}[cfg.unroll]
    beats = {"pixelwise": cfg.out_w * cfg.out_h,
             "row_parallel": cfg.in_h, "fully_unrolled": 1}[cfg.unroll]
    g.metadata.update(
        duplication=dup,
        multiplier_count=counters["multipliers"],
        inputs_per_cycle=ins,
        outputs_per_cycle=outs,
        ports_per_beat=ports_per_beat,
        beats=beats,
        memory_bits=memory_bits,
        warmup=cfg.f_h - 1 if cfg.unroll == "row_parallel" else 0,
    )
    return g


# -- pipelining -------------------------------------------------------------


def pipeline(g: DataflowGraph, align_outputs: bool = True) -> DataflowGraph:
    """Insert a register after every add/sub and balance reconvergent paths.

    Operand edges arriving early are padded with delay chains so both inputs
    of every adder carry the same stream beat. Window-buffer registers flagged
    ``structural`` deliver several beats at once by design and do not count
    toward balancing. With ``align_outputs`` all output ports are padded to a
    common latency; the systolic builder keeps its per-column skew instead.

    Records per-output beat latency (structural warm-up plus datapath register
    count) and the overall latency in the graph metadata. Idempotent via the
    ``pipelined`` flag.
    """
    if g.metadata.get("pipelined"):
        return g
    repl: dict[int, int] = {}
    slat: dict[int, int | None] = {}

    def delay(src: int, by: int) -> int:
        if by == 1:
            return g.add("register", g.node(src).width, (src,))
        return g.add("shift_register_chain", g.node(src).width, (src,), depth=by)

    for nid in list(g.topo_order()):
        n = g.node(nid)
        if n.ins:
            n.ins = tuple(repl.get(i, i) for i in n.ins)
        if n.kind in ("input_port", "counter"):
            slat[nid] = 0
        elif n.kind == "constant":
            slat[nid] = None
        elif n.kind == "register":
            base = slat[n.ins[0]]
            # a delayed constant is still a constant: stay latency-wild.
            # structural window registers deliver several beats at once and
            # do not shift the schedule.
            if base is None:
                slat[nid] = None
            else:
                slat[nid] = base if n.p("structural") else base + 1
        elif n.kind == "shift_register_chain":
            base = slat[n.ins[0]]
            if base is None:
                slat[nid] = None
            else:
                slat[nid] = base if n.p("structural") else base + n.p("depth", 1)
        elif n.kind == "memory":
            slat[nid] = (slat[n.ins[0]] or 0) + 1
        elif n.kind in ARITH_KINDS:
            lats = [slat[i] for i in n.ins if slat[i] is not None]
            lvl = max(lats, default=0)
            padded = []
            for i in n.ins:
                li = slat[i]
                if li is not None and li < lvl:
                    pad = delay(i, lvl - li)
                    slat[pad] = lvl
                    padded.append(pad)
                else:
                    padded.append(i)
            n.ins = tuple(padded)
            n.stage = lvl + 1
            reg = g.add("register", n.width, (nid,))
            g.node(reg).stage = lvl + 1
            slat[nid] = lvl
            slat[reg] = lvl + 1
            repl[nid] = reg
        else:
            lats = [slat[i] for i in n.ins if slat[i] is not None]
            slat[nid] = max(lats) if lats else None
            if n.kind != "output_port":
                n.stage = slat[nid] or 0

    if align_outputs and g.outputs:
        drv_lat = {o: slat[g.node(o).ins[0]] for o in g.outputs}
        top = max((v for v in drv_lat.values() if v is not None), default=0)
        for o in g.outputs:
            if drv_lat[o] is None:  # constant-valued output, nothing to align
                continue
            gap = top - drv_lat[o]
            if gap > 0:
                src = g.node(o).ins[0]
                pad = delay(src, gap)
                slat[pad] = top
                g.node(o).ins = (pad,)

    # beat-to-output latency: the structural window warm-up plus the datapath
    # register count. The warm-up term is fixed by the kernel shape, not by
    # which window taps survive pruning, so sampling stays aligned.
    warmup = g.metadata.get("warmup", 0)
    lats = [warmup + (slat[g.node(o).ins[0]] or 0) for o in g.outputs]
    g.metadata["per_output_latency"] = lats
    g.metadata["latency"] = max(lats, default=0)
    g.metadata["pipelined"] = True
    for o in g.outputs:
        g.node(o).stage = g.metadata["latency"]
    return g
