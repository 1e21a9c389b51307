"""Typed dataflow-netlist IR for pipelined kernels.

A graph is a DAG of fixed-width nodes. Sequential kinds (register, chain,
memory, counter) delay values by whole cycles; everything else settles
combinationally within a cycle. Builders keep node creation in dependency
order, but consumers of the node list must not rely on that: use
:meth:`DataflowGraph.topo_order`.

Width bookkeeping is conservative (a declared width always covers the value
range) and is checked by :meth:`DataflowGraph.validate` per the rule recorded
in each arithmetic node's ``wrule`` param:

* ``max1`` -- width == max(operand widths) + 1 (exact widening),
* ``fixed`` -- width set by the builder (adder-tree levels widen one bit per
  level from the full product width; systolic accumulators are sized from the
  column's worst-case magnitude).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import GraphError

KINDS = frozenset({
    "input_port", "output_port", "constant", "shift", "add", "sub", "and_gate",
    "register", "shift_register_chain", "memory", "counter", "mux", "compare",
})
SEQ_KINDS = frozenset({"register", "shift_register_chain", "memory", "counter"})
ARITH_KINDS = frozenset({"add", "sub"})


@dataclass
class Node:
    nid: int
    kind: str
    width: int
    ins: tuple[int, ...] = ()
    params: dict | None = None
    stage: int = 0

    def p(self, key, default=None):
        return (self.params or {}).get(key, default)


class DataflowGraph:
    """Mutable netlist: nodes, port lists, and free-form metadata."""

    def __init__(self, metadata: dict | None = None):
        self.nodes: list[Node] = []
        self.inputs: list[int] = []
        self.outputs: list[int] = []
        self.metadata: dict = dict(metadata or {})

    def add(self, kind: str, width: int, ins: tuple[int, ...] = (), **params) -> int:
        if kind not in KINDS:
            raise GraphError(f"unknown node kind {kind!r}")
        if width < 1:
            raise GraphError(f"node width must be >= 1, got {width}")
        nid = len(self.nodes)
        for i in ins:
            if not 0 <= i < nid:
                raise GraphError(f"node {nid} references undefined input {i}")
        self.nodes.append(Node(nid, kind, int(width), tuple(ins), params or None))
        if kind == "input_port":
            self.inputs.append(nid)
        elif kind == "output_port":
            self.outputs.append(nid)
        return nid

    def node(self, nid: int) -> Node:
        return self.nodes[nid]

    def __len__(self) -> int:
        return len(self.nodes)

    def kind_count(self, kind: str) -> int:
        return sum(1 for n in self.nodes if n.kind == kind)

    def consumers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n.nid: [] for n in self.nodes}
        for n in self.nodes:
            for i in n.ins:
                out[i].append(n.nid)
        return out

    def topo_order(self) -> list[int]:
        indeg = [len(n.ins) for n in self.nodes]
        cons = self.consumers()
        ready = deque(n.nid for n in self.nodes if indeg[n.nid] == 0)
        order: list[int] = []
        while ready:
            nid = ready.popleft()
            order.append(nid)
            for c in cons[nid]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            raise GraphError("graph contains a combinational cycle")
        return order

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        """Raise GraphError on structural problems; cheap enough to run on every build."""
        self.topo_order()  # acyclicity
        for n in self.nodes:
            self._check_node(n)
        # at most one add/sub settles between consecutive registers
        depth: dict[int, int] = {}
        for nid in self.topo_order():
            n = self.nodes[nid]
            if n.kind in SEQ_KINDS or n.kind in ("input_port", "constant"):
                depth[nid] = 0
                continue
            base = max((depth[i] for i in n.ins), default=0)
            if n.kind in ARITH_KINDS:
                base += 1
                if base > 1:
                    raise GraphError(f"node {nid}: {base} arithmetic stages since last register")
            depth[nid] = base

    def _check_node(self, n: Node) -> None:
        w_in = [self.nodes[i].width for i in n.ins]
        if n.kind == "input_port":
            if n.ins:
                raise GraphError(f"input port {n.nid} must not have drivers")
        elif n.kind == "output_port":
            if len(n.ins) != 1:
                raise GraphError(f"output port {n.nid} needs exactly one driver")
        elif n.kind == "constant":
            if n.p("value") is None:
                raise GraphError(f"constant {n.nid} has no value")
        elif n.kind == "shift":
            if len(n.ins) != 1 or n.width != w_in[0] + n.p("amount", 0):
                raise GraphError(f"shift {n.nid}: width must be input + amount")
        elif n.kind in ARITH_KINDS:
            if len(n.ins) != 2:
                raise GraphError(f"{n.kind} {n.nid} needs two operands")
            rule = n.p("wrule", "max1")
            if rule == "max1" and n.width != max(w_in) + 1:
                raise GraphError(f"{n.kind} {n.nid}: width {n.width} != max(in)+1")
            if n.width < max(w_in):
                raise GraphError(f"{n.kind} {n.nid}: width {n.width} narrows operands")
        elif n.kind == "and_gate":
            if len(n.ins) != 2 or n.width != w_in[0] or w_in[1] != 1:
                raise GraphError(f"and_gate {n.nid}: (bus, 1-bit gate) expected")
        elif n.kind == "register":
            if len(n.ins) != 1 or n.width != w_in[0]:
                raise GraphError(f"register {n.nid} must match driver width")
        elif n.kind == "shift_register_chain":
            if len(n.ins) != 1 or n.width != w_in[0] or n.p("depth", 0) < 1:
                raise GraphError(f"chain {n.nid} needs depth >= 1 and matching width")
        elif n.kind == "memory":
            if len(n.ins) != 1 or n.p("tap") is None:
                raise GraphError(f"memory {n.nid} needs an address input and a tap")
        elif n.kind == "counter":
            if n.ins or n.p("period", 0) < 1:
                raise GraphError(f"counter {n.nid} needs a period and no inputs")
        elif n.kind == "mux":
            if len(n.ins) != 3 or w_in[0] != 1:
                raise GraphError(f"mux {n.nid}: (1-bit select, a, b) expected")
        elif n.kind == "compare":
            if len(n.ins) != 2 or n.width != 1:
                raise GraphError(f"compare {n.nid} must be 1 bit wide")

    # -- latency ------------------------------------------------------------

    def seq_delay(self, n: Node) -> int:
        if n.kind in ("register", "memory"):
            return 1
        if n.kind == "shift_register_chain":
            return n.p("depth", 1)
        return 0

    def output_latencies(self) -> list[int]:
        """Register count on the longest path into each output port."""
        lat: dict[int, int | None] = {}
        for nid in self.topo_order():
            n = self.nodes[nid]
            if n.kind == "constant":
                lat[nid] = None
                continue
            if n.kind in ("input_port", "counter"):
                lat[nid] = 0
                continue
            ins = [lat[i] for i in n.ins if lat[i] is not None]
            base = max(ins) if ins else (0 if n.kind in SEQ_KINDS else None)
            lat[nid] = None if base is None else base + self.seq_delay(n)
        return [lat[self.nodes[o].ins[0]] or 0 for o in self.outputs]

    # -- export -------------------------------------------------------------

    def to_text(self) -> str:
        """Deterministic netlist listing for debugging and golden tests."""
        lines = []
        for n in self.nodes:
            extras = ""
            if n.params:
                extras = " " + " ".join(f"{k}={n.params[k]}" for k in sorted(n.params))
            ins = ",".join(str(i) for i in n.ins)
            lines.append(f"n{n.nid} {n.kind} w={n.width} stage={n.stage} ins=[{ins}]{extras}")
        lines.append("inputs: " + " ".join(str(i) for i in self.inputs))
        lines.append("outputs: " + " ".join(str(o) for o in self.outputs))
        for k in sorted(self.metadata):
            v = self.metadata[k]
            if isinstance(v, (int, float, str, tuple, list)):
                lines.append(f"meta {k}: {v}")
        return "\n".join(lines) + "\n"
