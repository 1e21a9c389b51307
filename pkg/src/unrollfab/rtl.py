"""Deterministic SystemVerilog emission plus CAD flow-script stubs.

Emission is a pure function of (graph, config): node names derive from node
ids, weights appear as width-annotated decimal literals, and the only memory
ever inferred is the pixelwise line buffer (loaded through a write port; the
generated testbench fills it while reset is held). Input and output ports are
aggregated into one ``in_bus`` / ``out_bus`` each, with a parseable port-map
comment giving every logical port's slice.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmissionError
from .graph import DataflowGraph
from .kernels import KernelConfig
from .tensors import InputStimulus

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class EmissionConfig:
    top: str = "kernel_top"
    reset: str = "active_high"  # or active_low
    include_testbench: bool = False
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        if not _IDENT.match(self.top):
            raise EmissionError(f"illegal module name {self.top!r}")
        if self.reset not in ("active_high", "active_low"):
            raise EmissionError(f"unknown reset polarity {self.reset!r}")


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _name(nid: int) -> str:
    return f"n{nid:05d}"


def _lit(value: int, width: int, signed: bool) -> str:
    if signed:
        return f"-{width}'sd{-value}" if value < 0 else f"{width}'sd{value}"
    return f"{width}'d{value}"


def _pack_bus(values, widths) -> int:
    word, off = 0, 0
    for v, w in zip(values, widths):
        word |= (v & ((1 << w) - 1)) << off
        off += w
    return word


class _Emitter:
    def __init__(self, graph: DataflowGraph, cfg: EmissionConfig):
        self.g = graph
        self.cfg = cfg
        self.signed = graph.metadata.get("config", {}).get("bits", 2) >= 2
        self.in_widths = [graph.node(i).width for i in graph.inputs]
        self.out_widths = [graph.node(o).width for o in graph.outputs]
        self.rst = "rst" if cfg.reset == "active_high" else "rst_n"
        self.rst_cond = "rst" if cfg.reset == "active_high" else "!rst_n"
        self.mem_nodes = [n for n in graph.nodes if n.kind == "memory"]
        self.in_offset = {}
        off = 0
        for nid, w in zip(graph.inputs, self.in_widths):
            self.in_offset[nid] = off
            off += w

    def vec(self, width: int) -> str:
        base = "logic signed" if self.signed and width > 1 else "logic"
        return f"{base} [{width - 1}:0]"

    def module(self) -> str:
        g, out = self.g, []
        out.append(f"// module {self.cfg.top}: generated unrolled kernel")
        hdr = dict(self.cfg.header)
        hdr.setdefault("config", g.metadata.get("config", {}))
        for key in ("weights_seed", "weights_sparsity"):
            if key in g.metadata:
                hdr.setdefault(key, g.metadata[key])
        out.append("// " + json.dumps(hdr, sort_keys=True, default=str))
        ports = ["  input  logic clk", f"  input  logic {self.rst}"]
        if g.inputs:
            ports.append(f"  input  logic [{sum(self.in_widths) - 1}:0] in_bus")
        if self.mem_nodes:
            words, data_w, addr_w = self._buffer_geometry()
            ports.append("  input  logic wr_en")
            ports.append(f"  input  logic [{addr_w - 1}:0] wr_addr")
            ports.append(f"  input  logic [{data_w - 1}:0] wr_data")
        ports.append(f"  output logic [{sum(self.out_widths) - 1}:0] out_bus")
        out.append(f"module {self.cfg.top} (")
        out.append(",\n".join(ports))
        out.append(");")
        out.extend(self._port_map_comment())
        if self.mem_nodes:
            out.extend(self._buffer_decl())
        for n in g.nodes:
            out.extend(self._node_text(n))
        out.extend(self._out_bus())
        out.append("endmodule")
        return "\n".join(out) + "\n"

    def _port_map_comment(self) -> list[str]:
        lines = ["  // port map (logical port = bus slice):"]
        off = 0
        for nid, w in zip(self.g.inputs, self.in_widths):
            nm = self.g.node(nid).p("name", _name(nid))
            lines.append(f"  //   in {nm} = in_bus[{off + w - 1}:{off}]")
            off += w
        off = 0
        for nid, w in zip(self.g.outputs, self.out_widths):
            nm = self.g.node(nid).p("name", _name(nid))
            lines.append(f"  //   out {nm} = out_bus[{off + w - 1}:{off}]")
            off += w
        return lines

    def _buffer_geometry(self) -> tuple[int, int, int]:
        in_w, in_h, in_c = self.mem_nodes[0].p("buffer")
        words = in_w * in_h * in_c
        bits = self.g.metadata.get("config", {}).get("bits", 8)
        addr_w = max(1, (words - 1).bit_length())
        return words, bits, addr_w

    def _buffer_decl(self) -> list[str]:
        words, data_w, _ = self._buffer_geometry()
        cfg = self.g.metadata["config"]
        out_h = cfg["in_h"] - cfg["f_h"] + 1
        ctr = next(n for n in self.g.nodes if n.kind == "counter")
        return [
            f"  // pixelwise line buffer: {words} words x {data_w} bits, written externally",
            f"  logic [{data_w - 1}:0] buf_mem [0:{words - 1}];",
            "  always_ff @(posedge clk) if (wr_en) buf_mem[wr_addr] <= wr_data;",
            f"  wire [31:0] scan_x = 32'({_name(ctr.nid)}) / 32'd{out_h};",
            f"  wire [31:0] scan_y = 32'({_name(ctr.nid)}) % 32'd{out_h};",
        ]

    def _node_text(self, n) -> list[str]:
        nm = _name(n.nid)
        ins = [_name(i) for i in n.ins]
        label = n.p("label")
        pre = [f"  // --- {label} ---"] if label else []
        if n.kind == "input_port":
            off = self.in_offset[n.nid]
            return pre + [f"  wire {self._ty(n.width)} {nm} = "
                          f"in_bus[{off + n.width - 1}:{off}];"]
        if n.kind == "output_port":
            return pre + [f"  wire {self._ty(n.width)} {nm} = {ins[0]};"]
        if n.kind == "constant":
            return pre + [f"  wire {self._ty(n.width)} {nm} = "
                          f"{_lit(n.p('value'), n.width, self.signed and n.width > 1)};"]
        if n.kind == "shift":
            return pre + [f"  wire {self._ty(n.width)} {nm} = "
                          f"{n.width}'({ins[0]}) <<< {n.p('amount')};"]
        if n.kind == "add":
            return pre + [f"  wire {self._ty(n.width)} {nm} = "
                          f"{n.width}'({ins[0]}) + {n.width}'({ins[1]});"]
        if n.kind == "sub":
            return pre + [f"  wire {self._ty(n.width)} {nm} = "
                          f"{n.width}'({ins[0]}) - {n.width}'({ins[1]});"]
        if n.kind == "and_gate":
            return pre + [f"  wire {self._ty(n.width)} {nm} = {ins[1]} ? {ins[0]} : '0;"]
        if n.kind == "mux":
            return pre + [f"  wire {self._ty(n.width)} {nm} = {ins[0]} ? {ins[2]} : {ins[1]};"]
        if n.kind == "compare":
            return pre + [f"  wire {nm} = ({ins[0]} == {ins[1]});"]
        if n.kind == "register":
            return pre + [
                f"  {self.vec(n.width)} {nm};",
                f"  always_ff @(posedge clk) if ({self.rst_cond}) {nm} <= '0; "
                f"else {nm} <= {ins[0]};",
            ]
        if n.kind == "shift_register_chain":
            d = n.p("depth")
            lines = [
                f"  {self.vec(n.width)} {nm}_q [0:{d - 1}];",
                f"  always_ff @(posedge clk) if ({self.rst_cond}) {nm}_q[{d - 1}] <= '0; "
                f"else {nm}_q[{d - 1}] <= {ins[0]};",
            ]
            if d > 1:
                lines += [
                    f"  for (genvar g_{nm} = 0; g_{nm} < {d - 1}; g_{nm}++) begin : {nm}_sr",
                    f"    always_ff @(posedge clk) if ({self.rst_cond}) {nm}_q[g_{nm}] <= '0; "
                    f"else {nm}_q[g_{nm}] <= {nm}_q[g_{nm} + 1];",
                    "  end",
                ]
            lines.append(f"  wire {self._ty(n.width)} {nm} = {nm}_q[0];")
            return pre + lines
        if n.kind == "counter":
            period = n.p("period")
            return pre + [
                f"  logic [{n.width - 1}:0] {nm};",
                f"  always_ff @(posedge clk) if ({self.rst_cond}) {nm} <= '0; "
                f"else {nm} <= ({nm} == {n.width}'d{period - 1}) ? '0 : {nm} + 1'b1;",
            ]
        if n.kind == "memory":
            dx, dy, c = n.p("tap")
            cfg = self.g.metadata["config"]
            in_h, in_c = cfg["in_h"], cfg["in_c"]
            addr = (f"((scan_x + 32'd{dx}) * 32'd{in_h} + (scan_y + 32'd{dy})) "
                    f"* 32'd{in_c} + 32'd{c}")
            words, _, addr_w = self._buffer_geometry()
            return pre + [
                f"  {self.vec(n.width)} {nm};",
                f"  always_ff @(posedge clk) {nm} <= buf_mem[{addr_w}'({addr})];",
            ]
        raise EmissionError(f"no emission rule for node {n.nid} of kind {n.kind!r}")

    def _ty(self, width: int) -> str:
        return f"signed [{width - 1}:0]" if self.signed and width > 1 else f"[{width - 1}:0]"

    def _out_bus(self) -> list[str]:
        lines = []
        off = 0
        for nid, w in zip(self.g.outputs, self.out_widths):
            lines.append(f"  assign out_bus[{off + w - 1}:{off}] = {_name(nid)};")
            off += w
        return lines


def emit(graph: DataflowGraph, cfg: EmissionConfig) -> dict[str, str]:
    """Emit the artifact set for one design: {filename: text}."""
    names = set()
    for n in graph.nodes:
        nm = _name(n.nid)
        if nm in names:
            raise EmissionError(f"node name collision on {nm}")
        names.add(nm)
    return {f"{cfg.top}.sv": _Emitter(graph, cfg).module()}


def emit_testbench(graph: DataflowGraph, cfg: EmissionConfig,
                   stimulus: InputStimulus, expected: list[int]) -> dict[str, str]:
    """Self-checking bench: drives the stimulus, waits out the pipeline, compares."""
    from .simulate import stimulus_beats, logical_beats  # avoid import cycle at load

    kcfg = KernelConfig(**graph.metadata["config"])
    beats, image = stimulus_beats(kcfg, stimulus)
    n_logical = logical_beats(kcfg)
    lats = graph.metadata["per_output_latency"]
    if len(expected) != n_logical * len(graph.outputs):
        raise EmissionError(
            f"expected {n_logical * len(graph.outputs)} golden values, got {len(expected)}")
    em = _Emitter(graph, cfg)
    in_bits = sum(em.in_widths)
    out_widths = em.out_widths
    total_cycles = n_logical + max(lats, default=0) + 2
    rst, rst_on, rst_off = em.rst, ("1'b1" if em.rst == "rst" else "1'b0"), \
        ("1'b0" if em.rst == "rst" else "1'b1")

    from .simulate import _flat_slot
    lines = [f"// self-checking bench for {cfg.top}", "`timescale 1ns/1ps",
             f"module {cfg.top}_tb;"]
    lines.append("  logic clk = 0; always #5 clk = ~clk;")
    lines.append(f"  logic {rst};")
    lines.append("  integer errors = 0;")
    lines.append("  integer c;")
    if graph.inputs:
        lines.append(f"  logic [{in_bits - 1}:0] in_bus;")
    if em.mem_nodes:
        words, data_w, addr_w = em._buffer_geometry()
        lines.append("  logic wr_en;")
        lines.append(f"  logic [{addr_w - 1}:0] wr_addr;")
        lines.append(f"  logic [{data_w - 1}:0] wr_data;")
    lines.append(f"  logic [{sum(out_widths) - 1}:0] out_bus;")
    conns = [".clk(clk)", f".{rst}({rst})"]
    if graph.inputs:
        conns.append(".in_bus(in_bus)")
    if em.mem_nodes:
        conns += [".wr_en(wr_en)", ".wr_addr(wr_addr)", ".wr_data(wr_data)"]
    conns.append(".out_bus(out_bus)")
    lines.append(f"  {cfg.top} dut ({', '.join(conns)});")

    if graph.inputs:
        lines.append(f"  logic [{in_bits - 1}:0] stim [0:{max(len(beats), 1) - 1}];")
        lines.append("  initial begin")
        for t, beat in enumerate(beats):
            word = _pack_bus(beat, em.in_widths)
            lines.append(f"    stim[{t}] = {in_bits}'h{word:x};")
        lines.append("  end")
    off = 0
    checks = []
    for k, w in enumerate(out_widths):
        vals = [expected[_flat_slot(kcfg, t, k)] for t in range(n_logical)]
        lines.append(f"  logic [{w - 1}:0] exp_{k} [0:{n_logical - 1}];")
        lines.append("  initial begin")
        for t, v in enumerate(vals):
            lines.append(f"    exp_{k}[{t}] = {w}'h{v & ((1 << w) - 1):x};")
        lines.append("  end")
        checks.append(
            f"      if (c >= {lats[k]} && c - {lats[k]} < {n_logical} && "
            f"out_bus[{off + w - 1}:{off}] !== exp_{k}[c - {lats[k]}]) begin\n"
            f"        errors = errors + 1;\n"
            f"        $display(\"MISMATCH port {k} cycle %0d: got %0h want %0h\", "
            f"c, out_bus[{off + w - 1}:{off}], exp_{k}[c - {lats[k]}]);\n"
            f"      end")
        off += w

    # cycle c starts at the reset-release negedge: drive the beat, settle,
    # check, then step past the next posedge. The register update between
    # cycles happens on that posedge, mirroring the two-phase simulator.
    lines.append("  initial begin")
    lines.append(f"    {rst} = {rst_on};")
    if graph.inputs:
        lines.append("    in_bus = '0;")
    if em.mem_nodes:
        words, data_w, addr_w = em._buffer_geometry()
        lines.append("    // fill the line buffer while reset is held")
        lines.append("    wr_en = 1'b1;")
        for a, v in enumerate(image):
            lines.append(f"    wr_addr = {addr_w}'d{a}; "
                         f"wr_data = {data_w}'h{v & ((1 << data_w) - 1):x}; @(negedge clk);")
        lines.append("    wr_en = 1'b0;")
    lines.append("    @(negedge clk);")
    lines.append("    @(negedge clk);")
    lines.append(f"    {rst} = {rst_off};")
    lines.append(f"    for (c = 0; c < {total_cycles}; c = c + 1) begin")
    if graph.inputs:
        lines.append(f"      in_bus = (c < {len(beats)}) ? stim[c] : '0;")
    lines.append("      #1;")
    lines.extend(checks)
    lines.append("      @(negedge clk);")
    lines.append("    end")
    lines.append("    if (errors == 0) $display(\"TB PASS\");")
    lines.append("    else $display(\"TB FAIL: %0d mismatches\", errors);")
    lines.append("    $finish;")
    lines.append("  end")
    lines.append("endmodule")
    return {f"{cfg.top}_tb.sv": "\n".join(lines) + "\n"}


def emit_flow_scripts(designs: list[tuple[str, str]], target: str) -> dict[str, str]:
    """Template flow scripts for a batch of (top module, source file) designs."""
    if target not in ("quartus_like", "vtr_like"):
        raise EmissionError(f"unknown flow target {target!r}")
    files: dict[str, str] = {}
    manifest = []
    for top, src in designs:
        if target == "vtr_like":
            name = f"{top}_vtr.sh"
            files[name] = (
                "#!/bin/sh\n"
                f"# flow script for {top} (academic flow)\n"
                "# ARCH_XML: path to the target architecture description\n"
                f"\"$VTR_ROOT\"/vtr_flow/scripts/run_vtr_flow.py {src} "
                "\"${ARCH_XML:?set ARCH_XML}\" \\\n"
                f"  -top {top} -temp_dir run_{top}\n")
        else:
            name = f"{top}_quartus.tcl"
            files[name] = (
                f"# flow script for {top} (vendor flow)\n"
                f"project_new {top} -overwrite\n"
                "set_global_assignment -name DEVICE <DEVICE>\n"
                f"set_global_assignment -name TOP_LEVEL_ENTITY {top}\n"
                f"set_global_assignment -name SYSTEMVERILOG_FILE {src}\n"
                "execute_flow -compile\n"
                "project_close\n")
        manifest.append(f"{top} {src} {name}")
    files["manifest.txt"] = "\n".join(manifest) + ("\n" if manifest else "")
    return files


def parse_ports(sv_text: str) -> dict:
    """Recover bus widths and the logical port map from emitted source."""
    buses = {}
    for m in re.finditer(r"(input|output)\s+logic\s+\[(\d+):0\]\s+(\w+)", sv_text):
        buses[m.group(3)] = int(m.group(2)) + 1
    ports = {"in": [], "out": []}
    for m in re.finditer(r"//   (in|out) (\S+) = \w+\[(\d+):(\d+)\]", sv_text):
        ports[m.group(1)].append((m.group(2), int(m.group(3)) - int(m.group(4)) + 1))
    return {"buses": buses, "ports": ports}


def write_design(graph: DataflowGraph, cfg: EmissionConfig, out_dir,
                 stimulus: InputStimulus | None = None,
                 expected: list[int] | None = None,
                 flow_target: str | None = None) -> list[Path]:
    """Write the artifact set under ``out_dir/<top>_<hash>/``; returns paths."""
    payload = {"top": cfg.top, "reset": cfg.reset,
               "config": graph.metadata.get("config", {})}
    dest = Path(out_dir) / f"{cfg.top}_{config_hash(payload)}"
    dest.mkdir(parents=True, exist_ok=True)
    files = emit(graph, cfg)
    if cfg.include_testbench:
        if stimulus is None or expected is None:
            raise EmissionError("testbench requested but stimulus/expected missing")
        files.update(emit_testbench(graph, cfg, stimulus, expected))
    if flow_target:
        files.update(emit_flow_scripts([(cfg.top, f"{cfg.top}.sv")], flow_target))
    written = []
    for name in sorted(files):
        path = dest / name
        path.write_text(files[name])
        written.append(path)
    return written
