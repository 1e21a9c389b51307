"""Cycle-accurate netlist evaluation and golden-model equivalence checking.

Each cycle runs two phases: combinational settle in topological order, then a
simultaneous sequential update (registers, delay chains, the scan counter, and
1-cycle-latency buffer reads). Values are exact Python integers; there is no
X/Z modeling.

Stream semantics per kernel: row-parallel GEMM streams one input row per
beat; fully-unrolled kernels take a single beat; pixelwise convolutions read a
preloaded buffer and produce one output pixel per cycle; row-parallel conv2d
streams one input row per beat into the window chains. Output beat t of port
k appears ``per_output_latency[k]`` cycles after beat t enters.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from collections import deque

from .errors import SimulationError, ShapeError
from .graph import DataflowGraph
from .golden import golden_outputs
from .kernels import KernelConfig
from .tensors import InputStimulus, WeightTensor, generate_inputs


@dataclass
class SimTrace:
    """Per-cycle port values plus the measured pipeline fill."""

    inputs: list[list[int]]
    outputs: list[list[int]]
    latency_observed: list[int | None]
    cycles: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cycle", "port", "value"])
            for t, beat in enumerate(self.inputs):
                for k, v in enumerate(beat):
                    w.writerow([t, f"in{k}", v])
            for t, vals in enumerate(self.outputs):
                for k, v in enumerate(vals):
                    w.writerow([t, f"out{k}", v])


def run(graph: DataflowGraph, beats: list[list[int]] | None = None,
        memory_image: list[int] | None = None, cycles: int | None = None,
        track_latency: bool = False) -> SimTrace:
    """Drive ``beats`` (one list of input-port values per cycle) and record outputs.

    ``memory_image`` preloads pixelwise line buffers before cycle zero. When
    ``track_latency`` is set, stimulus influence is traced through the graph
    and the first influenced cycle of each output is reported.
    """
    beats = beats or []
    n_in = len(graph.inputs)
    for t, b in enumerate(beats):
        if len(b) != n_in:
            raise SimulationError(f"beat {t} carries {len(b)} values for {n_in} input ports")
    if cycles is None:
        cycles = len(beats) + graph.metadata.get("latency", 0) + 1

    order = graph.topo_order()
    nodes = graph.nodes
    in_index = {nid: k for k, nid in enumerate(graph.inputs)}
    val = [0] * len(nodes)
    taint = [False] * len(nodes)
    state: dict[int, int] = {}
    chains: dict[int, deque] = {}
    chain_taint: dict[int, deque] = {}
    mem_cfg: dict[int, tuple] = {}
    for n in nodes:
        if n.kind == "register":
            state[n.nid] = 0
        elif n.kind == "shift_register_chain":
            chains[n.nid] = deque([0] * n.p("depth", 1), maxlen=n.p("depth", 1))
            chain_taint[n.nid] = deque([False] * n.p("depth", 1), maxlen=n.p("depth", 1))
        elif n.kind == "counter":
            state[n.nid] = 0
        elif n.kind == "memory":
            if memory_image is None:
                raise SimulationError("graph reads a line buffer but no memory image was given")
            state[n.nid] = 0
            in_w, in_h, in_c = n.p("buffer")
            if len(memory_image) != in_w * in_h * in_c:
                raise ShapeError("memory image does not match buffer shape")
            out_h = graph.metadata["config"]["in_h"] - graph.metadata["config"]["f_h"] + 1
            mem_cfg[n.nid] = (n.p("tap"), in_h, in_c, out_h)
    reg_taint = {nid: False for nid in state}

    out_rows: list[list[int]] = []
    first_seen: list[int | None] = [None] * len(graph.outputs)
    for t in range(cycles):
        beat = beats[t] if t < len(beats) else [0] * n_in
        for nid in order:
            n = nodes[nid]
            k = n.kind
            if k == "input_port":
                val[nid] = beat[in_index[nid]]
                taint[nid] = t < len(beats)
            elif k == "constant":
                val[nid] = n.p("value")
            elif k in ("register", "counter", "memory"):
                val[nid] = state[nid]
                taint[nid] = reg_taint[nid]
            elif k == "shift_register_chain":
                val[nid] = chains[nid][0]
                taint[nid] = chain_taint[nid][0]
            elif k == "shift":
                val[nid] = val[n.ins[0]] << n.p("amount", 0)
                taint[nid] = taint[n.ins[0]]
            elif k == "add":
                a, b = n.ins
                val[nid] = val[a] + val[b]
                taint[nid] = taint[a] or taint[b]
            elif k == "sub":
                a, b = n.ins
                val[nid] = val[a] - val[b]
                taint[nid] = taint[a] or taint[b]
            elif k == "and_gate":
                a, gate = n.ins
                val[nid] = val[a] if val[gate] else 0
                taint[nid] = taint[a] or taint[gate]
            elif k == "mux":
                sel, a, b = n.ins
                val[nid] = val[b] if val[sel] else val[a]
                taint[nid] = taint[sel] or taint[a] or taint[b]
            elif k == "compare":
                a, b = n.ins
                val[nid] = int(val[a] == val[b])
                taint[nid] = taint[a] or taint[b]
            else:  # output_port
                val[nid] = val[n.ins[0]]
                taint[nid] = taint[n.ins[0]]
        out_rows.append([val[o] for o in graph.outputs])
        if track_latency:
            for k, o in enumerate(graph.outputs):
                if first_seen[k] is None and taint[o]:
                    first_seen[k] = t
        # sequential update
        for nid, n in ((s, nodes[s]) for s in state):
            if n.kind == "register":
                state[nid] = val[n.ins[0]]
                reg_taint[nid] = taint[n.ins[0]]
            elif n.kind == "counter":
                state[nid] = (state[nid] + 1) % n.p("period")
                reg_taint[nid] = False
            else:  # memory read, 1-cycle latency
                tap, in_h, in_c, out_h = mem_cfg[nid]
                scan = val[n.ins[0]]
                ox, oy = divmod(scan, out_h)
                dx, dy, c = tap
                state[nid] = memory_image[((ox + dx) * in_h + (oy + dy)) * in_c + c]
                reg_taint[nid] = True
        for nid in chains:
            src = nodes[nid].ins[0]
            chains[nid].append(val[src])
            chain_taint[nid].append(taint[src])
    return SimTrace(list(beats), out_rows, first_seen, cycles)


# -- kernel-level scheduling -------------------------------------------------


def stimulus_beats(cfg: KernelConfig, stim: InputStimulus) -> tuple[list[list[int]], list[int] | None]:
    """Translate an input tensor into per-cycle beats (and a buffer preload)."""
    if stim.shape != cfg.input_shape():
        raise ShapeError(f"stimulus {stim.shape} does not match kernel input {cfg.input_shape()}")
    v = stim.values
    if cfg.family in ("gemmt", "gemms"):
        if cfg.family == "gemmt" and cfg.unroll == "fully_unrolled":
            return [list(v)], None
        return [[stim[r, i] for i in range(cfg.n)] for r in range(cfg.m)], None
    if cfg.unroll == "pixelwise":
        return [], list(v)
    if cfg.unroll == "row_parallel":
        rows = [[stim[ix, iy, c] for ix in range(cfg.in_w) for c in range(cfg.in_c)]
                for iy in range(cfg.in_h)]
        return rows, None
    return [list(v)], None


def logical_beats(cfg: KernelConfig) -> int:
    """Distinct output beats a run produces (rows, pixels, or one shot)."""
    if cfg.family in ("gemmt", "gemms"):
        return 1 if cfg.unroll == "fully_unrolled" else cfg.m
    return {"pixelwise": cfg.out_w * cfg.out_h,
            "row_parallel": cfg.out_h,
            "fully_unrolled": 1}[cfg.unroll]


def collect_outputs(cfg: KernelConfig, graph: DataflowGraph, trace: SimTrace) -> list[int]:
    """Gather the output tensor from a trace, flattened like the golden model."""
    lats = graph.metadata["per_output_latency"]
    n_beats = logical_beats(cfg)
    flat = [0] * (n_beats * len(graph.outputs))
    for t in range(n_beats):
        for k in range(len(graph.outputs)):
            cyc = t + lats[k]
            if cyc >= trace.cycles:
                raise SimulationError(f"trace too short: need cycle {cyc}, have {trace.cycles}")
            flat[_flat_slot(cfg, t, k)] = trace.outputs[cyc][k]
    return flat


def _flat_slot(cfg: KernelConfig, beat: int, port: int) -> int:
    if cfg.family in ("gemmt", "gemms"):
        return beat * (len_outputs(cfg) if cfg.unroll == "fully_unrolled" else cfg.p) + port
    if cfg.unroll == "pixelwise":
        # beat is the scan position (ox * out_h + oy), ports run over channels
        return beat * cfg.out_c + port
    if cfg.unroll == "row_parallel":
        # port order is (ox, oc); beat is the output row oy
        ox, oc = divmod(port, cfg.out_c)
        return (ox * cfg.out_h + beat) * cfg.out_c + oc
    return port


def len_outputs(cfg: KernelConfig) -> int:
    if cfg.family in ("gemmt", "gemms"):
        return cfg.m * cfg.p if cfg.unroll == "fully_unrolled" else cfg.p
    ow, oh, oc = cfg.out_w, cfg.out_h, cfg.out_c
    return {"pixelwise": oc, "row_parallel": ow * oc, "fully_unrolled": ow * oh * oc}[cfg.unroll]


def simulate_kernel(cfg: KernelConfig, graph: DataflowGraph, stim: InputStimulus,
                    track_latency: bool = False) -> tuple[list[int], SimTrace]:
    """Run one stimulus tensor through a built kernel; returns (flat outputs, trace)."""
    beats, image = stimulus_beats(cfg, stim)
    cycles = logical_beats(cfg) + max(graph.metadata["per_output_latency"], default=0)
    trace = run(graph, beats, memory_image=image, cycles=cycles,
                track_latency=track_latency)
    return collect_outputs(cfg, graph, trace), trace


@dataclass
class EquivalenceResult:
    passed: bool
    trials: int
    counterexample: dict | None = None

    def __bool__(self) -> bool:
        return self.passed


def check_equivalence(cfg: KernelConfig, weights: WeightTensor, n_trials: int = 20,
                      seed: int = 0, graph: DataflowGraph | None = None) -> EquivalenceResult:
    """Simulate the graph against the golden model on random stimuli.

    Returns the first counterexample (inputs, expected, got) on mismatch.
    """
    if n_trials < 1:
        raise SimulationError("n_trials must be >= 1")
    from .kernels import build_kernel  # local import keeps module load order simple
    if graph is None:
        graph = build_kernel(cfg, weights)
    for trial in range(n_trials):
        stim = generate_inputs(cfg.input_shape(), cfg.bits, seed=seed * 100003 + trial)
        expected = golden_outputs(cfg, weights, stim)
        got, _ = simulate_kernel(cfg, graph, stim)
        if got != expected:
            bad = next(i for i, (a, b) in enumerate(zip(got, expected)) if a != b)
            return EquivalenceResult(False, trial + 1, {
                "trial": trial, "stimulus": stim.values, "flat_index": bad,
                "expected": expected[bad], "got": got[bad],
            })
    return EquivalenceResult(True, n_trials)
