"""Technology mapping onto a parameterized logic-block architecture.

A basic logic element (BLE) is one K-LUT with two optionally registered
outputs and two hard adder bits; a logic block (LB) clusters N BLEs behind I
shared input pins. Decomposition rules:

* add/sub of width w -> ceil(w/2) arithmetic-mode BLEs (the following
  pipeline register rides the BLE flip-flops for free);
* standalone registers pack two flip-flop bits per BLE, paired across nodes
  in graph order;
* gated partial products (and_gate) feeding adders ride the arithmetic-mode
  front LUTs for free; anywhere else they cost one LUT per output bit;
* f-input generic logic (mux bit, compare) -> ceil((f-1)/(K-1)) LUTs by tree
  covering; counters cost max(1, ceil(i/(K-1))) LUTs for bit i;
* shifts are wiring; line buffers are tallied as memory bits, not logic.

Packing is greedy and connectivity-first. Pin accounting is per-LB: LUT
inputs count individual external bits, while arithmetic and register BLEs
count distinct external source buses (hard-adder operands ride dedicated
arithmetic input muxes, so a multi-BLE adder consumes its two operand buses,
not four pins per BLE).

The delay model is relative, for architecture comparison only: one LUT level
plus routing per logic stage and a ripple term per carry bit. Absolute timing
closure is out of scope.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

from .errors import MappingError, ParameterError
from .graph import ARITH_KINDS, SEQ_KINDS, DataflowGraph

T_LUT_PS = {3: 150, 4: 180, 5: 210, 6: 250}
T_ROUTE_PS = 500
T_CARRY_PS_PER_BIT = 20


def arch_pins(lut_size: int, bles_per_lb: int = 10) -> int:
    """Cluster input pins from the empirical rule I = ceil(K * (N + 1) / 2)."""
    if lut_size < 2 or bles_per_lb < 1:
        raise ParameterError("need lut_size >= 2 and bles_per_lb >= 1")
    return (lut_size * (bles_per_lb + 1) + 1) // 2


@dataclass(frozen=True)
class ArchParams:
    """Logic-block architecture knobs and the per-LB silicon cost."""

    name: str
    lut_size: int
    bles_per_lb: int
    input_pins: int
    channel_width: int
    tile_area_um2: float
    ffs_per_ble: int = 2
    hard_adder_bits_per_ble: int = 2
    t_lut_ps: int = 250
    t_route_ps: int = T_ROUTE_PS
    t_carry_ps_per_bit: int = T_CARRY_PS_PER_BIT

    def to_dict(self) -> dict:
        return asdict(self)


def _study(k: int, w: int, area: float) -> ArchParams:
    return ArchParams(f"K{k}", k, 10, arch_pins(k, 10), w, area, t_lut_ps=T_LUT_PS[k])


# Study presets pair the pin rule with measured channel widths / tile areas;
# the baseline preset mirrors a stock commercial-style cluster (I = 52).
ARCH_PRESETS: dict[str, ArchParams] = {
    "K3": _study(3, 102, 1664.0),
    "K4": _study(4, 96, 2053.0),
    "K5": _study(5, 90, 2520.0),
    "K6": _study(6, 90, 3420.0),
    "baseline-52": ArchParams("baseline-52", 6, 10, 52, 90, 3420.0, t_lut_ps=T_LUT_PS[6]),
}
ARCH_PRESETS["study-33"] = ARCH_PRESETS["K6"]


def get_arch(name: str) -> ArchParams:
    try:
        return ARCH_PRESETS[name]
    except KeyError:
        raise ParameterError(
            f"unknown architecture {name!r}; presets: {sorted(ARCH_PRESETS)}") from None


def load_arch_json(path) -> ArchParams:
    """Load ArchParams from a JSON object mirroring its fields."""
    with open(path) as fh:
        raw = json.load(fh)
    return ArchParams(**raw)


@dataclass(frozen=True)
class BLE:
    """One mapped basic logic element.

    ``pins`` are external input demands: ("bus", nid) entries share one LB pin
    per source bus, ("bit", nid, i) entries each take a pin. ``produces`` are
    the bus ids this BLE (co-)drives.
    """

    bid: int
    btype: str  # arith | logic | reg
    pins: tuple
    produces: tuple


@dataclass
class BleNetlist:
    bles: list[BLE] = field(default_factory=list)
    memory_bits: int = 0
    ff_bits: int = 0

    @property
    def ble_count(self) -> int:
        return len(self.bles)

    def count(self, btype: str) -> int:
        return sum(1 for b in self.bles if b.btype == btype)


def _resolve(g: DataflowGraph, nid: int, absorbed_and: set[int]) -> int | None:
    """Trace through wiring (shifts, absorbed gates) to the physical source bus."""
    n = g.node(nid)
    while True:
        if n.kind == "shift":
            n = g.node(n.ins[0])
        elif n.kind == "and_gate" and n.nid in absorbed_and:
            n = g.node(n.ins[0])
        elif n.kind == "output_port":
            n = g.node(n.ins[0])
        else:
            break
    return None if n.kind == "constant" else n.nid


def _absorbed_gates(g: DataflowGraph) -> set[int]:
    """and_gate nodes that ride the front LUTs of the adders they feed."""
    cons = g.consumers()
    absorbed: set[int] = set()
    for n in g.nodes:
        if n.kind != "and_gate":
            continue
        sinks = list(cons[n.nid])
        ok = bool(sinks)
        seen = set()
        while sinks:
            s = g.node(sinks.pop())
            if s.nid in seen:
                continue
            seen.add(s.nid)
            if s.kind in ARITH_KINDS:
                continue
            if s.kind == "shift":
                sinks.extend(cons[s.nid])
                continue
            ok = False
            break
        if ok:
            absorbed.add(n.nid)
    return absorbed


def _absorbed_registers(g: DataflowGraph) -> set[int]:
    """Registers fed straight from an add/sub latch inside its arithmetic BLEs.

    At most one register per adder: its BLEs have exactly width free FFs.
    """
    absorbed: set[int] = set()
    claimed: set[int] = set()
    for n in g.nodes:
        if n.kind == "register" and g.node(n.ins[0]).kind in ARITH_KINDS \
                and n.ins[0] not in claimed:
            absorbed.add(n.nid)
            claimed.add(n.ins[0])
    return absorbed


def decompose(g: DataflowGraph, arch: ArchParams) -> BleNetlist:
    """Map every graph node onto BLEs under the rules in the module docstring."""
    k = arch.lut_size
    absorbed_and = _absorbed_gates(g)
    absorbed_reg = _absorbed_registers(g)
    reg_of_driver: dict[int, list[int]] = {}
    for r in absorbed_reg:
        reg_of_driver.setdefault(g.node(r).ins[0], []).append(r)
    net = BleNetlist(memory_bits=int(g.metadata.get("memory_bits", 0)))
    bid = 0

    def emit(btype: str, pins, produces) -> None:
        nonlocal bid
        net.bles.append(BLE(bid, btype, tuple(pins), tuple(produces)))
        bid += 1

    def bus(nid: int):
        src = _resolve(g, nid, absorbed_and)
        return None if src is None else ("bus", src)

    def bits(nid: int, width: int):
        src = _resolve(g, nid, absorbed_and)
        return [] if src is None else [("bit", src, i) for i in range(width)]

    pending_ff: list[tuple] = []  # (source pin or None, produced bus)

    def flush_ffs():
        while pending_ff:
            pair = pending_ff[:2]
            del pending_ff[:2]
            pins = tuple(dict.fromkeys(p for p, _ in pair if p is not None))
            emit("reg", pins, tuple(dict.fromkeys(b for _, b in pair)))

    for n in g.nodes:
        kind = n.kind
        if kind in ("input_port", "output_port", "constant", "shift"):
            continue
        if kind in ARITH_KINDS:
            cons_reg = sorted(reg_of_driver.get(n.nid, ()))
            produces = (n.nid, *cons_reg)
            opins = tuple(dict.fromkeys(
                p for p in (bus(n.ins[0]), bus(n.ins[1])) if p is not None))
            for _ in range(math.ceil(n.width / arch.hard_adder_bits_per_ble)):
                emit("arith", opins, produces)
            if cons_reg:
                net.ff_bits += n.width
        elif kind == "register":
            if n.nid in absorbed_reg:
                continue
            net.ff_bits += n.width
            src = bus(n.ins[0])
            for _ in range(n.width):
                pending_ff.append((src, n.nid))
        elif kind == "shift_register_chain":
            depth = n.p("depth", 1)
            net.ff_bits += n.width * depth
            src = bus(n.ins[0])
            for _ in range(n.width * depth):
                pending_ff.append((src, n.nid))
        elif kind == "and_gate":
            if n.nid in absorbed_and:
                continue
            src = bits(n.ins[0], n.width)
            gpin = bus(n.ins[1])
            for i in range(n.width):
                pins = [src[i]] if i < len(src) else []
                if gpin is not None:
                    pins.append(gpin)
                emit("logic", pins, (n.nid,))
        elif kind == "mux":
            sel = bus(n.ins[0])
            a = bits(n.ins[1], n.width)
            b = bits(n.ins[2], n.width)
            for i in range(n.width):
                pins = [p for p in (sel,) if p is not None]
                pins += [x[i] for x in (a, b) if i < len(x)]
                emit("logic", pins, (n.nid,))
        elif kind == "compare":
            f = sum(g.node(i).width for i in n.ins)
            pins = bits(n.ins[0], g.node(n.ins[0]).width) + bits(n.ins[1], g.node(n.ins[1]).width)
            n_luts = max(1, math.ceil(max(f - 1, 1) / (k - 1)))
            for j in range(n_luts):
                emit("logic", tuple(pins[j::n_luts]), (n.nid,))
        elif kind == "counter":
            for i in range(n.width):
                for _ in range(max(1, math.ceil(i / (k - 1)))):
                    emit("logic", (), (n.nid,))
            net.ff_bits += n.width
        elif kind == "memory":
            continue  # buffer bits tallied from metadata; read port is part of the RAM
        else:
            raise MappingError(f"no decomposition rule for node kind {kind!r}")
    flush_ffs()
    return net


def generic_logic_luts(fan_in: int, lut_size: int) -> int:
    """Tree covering of one f-input function with K-LUTs."""
    if fan_in <= 1:
        return 1
    return math.ceil((fan_in - 1) / (lut_size - 1))


# -- packing ------------------------------------------------------------------


def _lb_pin_count(members: list[BLE], produced: set[int]) -> int:
    pins = set()
    for b in members:
        for p in b.pins:
            if p[1] in produced:
                continue
            pins.add(p)
    return len(pins)


def pack(net: BleNetlist, arch: ArchParams) -> list[list[int]]:
    """Greedy clustering into LBs of <= N BLEs and <= I external pins.

    BLEs are taken in creation order, which follows dataflow locality (a
    multiplier's adders, its pipeline registers, and the tree level they feed
    are adjacent), so consecutive BLEs share buses and LBs fill to capacity
    unless the pin bound closes them early. Deterministic by construction.
    """
    lbs: list[list[int]] = []
    members: list[BLE] = []
    produced: set[int] = set()
    pins: set = set()

    def close():
        nonlocal members, produced, pins
        if members:
            lbs.append([b.bid for b in members])
        members, produced, pins = [], set(), set()

    for b in net.bles:
        if len(members) >= arch.bles_per_lb:
            close()
        trial_produced = produced | set(b.produces)
        trial_pins = {p for p in (pins | set(b.pins)) if p[1] not in trial_produced}
        if members and len(trial_pins) > arch.input_pins:
            close()
            trial_produced = set(b.produces)
            trial_pins = {p for p in b.pins if p[1] not in trial_produced}
        members.append(b)
        produced = trial_produced
        pins = trial_pins
    close()
    return lbs


def check_packing(net: BleNetlist, lbs: list[list[int]], arch: ArchParams) -> None:
    """Post-hoc feasibility: capacity and the external-pin bound per LB."""
    seen: set[int] = set()
    for lb in lbs:
        if len(lb) > arch.bles_per_lb:
            raise MappingError(f"LB holds {len(lb)} BLEs > N={arch.bles_per_lb}")
        members = [net.bles[i] for i in lb]
        produced = {bus for b in members for bus in b.produces}
        pins = _lb_pin_count(members, produced)
        if pins > arch.input_pins:
            raise MappingError(f"LB needs {pins} external inputs > I={arch.input_pins}")
        seen.update(lb)
    if len(seen) != len(net.bles):
        raise MappingError("packing lost or duplicated BLEs")


# -- delay and the report ------------------------------------------------------


def model_delay_ps(g: DataflowGraph, arch: ArchParams) -> float:
    """Relative critical path: LUT+route per logic level, ripple per carry bit."""
    absorbed_and = _absorbed_gates(g)
    stage = arch.t_lut_ps + arch.t_route_ps
    crit = 0.0
    depth: dict[int, int] = {}
    for nid in g.topo_order():
        n = g.node(nid)
        if n.kind in SEQ_KINDS or n.kind in ("input_port", "constant"):
            depth[nid] = 0
            if n.kind == "counter":
                crit = max(crit, stage + n.width * arch.t_carry_ps_per_bit)
            continue
        base = max((depth[i] for i in n.ins), default=0)
        if n.kind in ARITH_KINDS:
            crit = max(crit, (base + 1) * stage + n.width * arch.t_carry_ps_per_bit)
            depth[nid] = base + 1
        elif n.kind in ("mux", "compare") or (n.kind == "and_gate" and nid not in absorbed_and):
            depth[nid] = base + 1
            crit = max(crit, (base + 1) * stage)
        else:
            depth[nid] = base
    return crit


@dataclass(frozen=True)
class CostReport:
    """Mapped cost of one design point on one architecture."""

    arch: str
    ble_count: int
    lb_count: int
    logic_area_um2: float
    memory_bits: int
    ff_bits: int
    crit_path_ns: float
    fmax_mhz: float | None
    adp_um2_ns: float
    throughput_ops: int
    ble_breakdown: dict

    def to_row(self) -> dict:
        row = asdict(self)
        row.update({f"ble_{k}": v for k, v in self.ble_breakdown.items()})
        del row["ble_breakdown"]
        return row

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def estimate(g: DataflowGraph, arch: ArchParams,
             net: BleNetlist | None = None) -> CostReport:
    """Full decompose / pack / delay pipeline for one graph on one architecture."""
    if net is None:
        net = decompose(g, arch)
    lbs = pack(net, arch)
    check_packing(net, lbs, arch)
    area = len(lbs) * arch.tile_area_um2
    crit_ps = model_delay_ps(g, arch)
    crit_ns = crit_ps / 1000.0
    return CostReport(
        arch=arch.name,
        ble_count=net.ble_count,
        lb_count=len(lbs),
        logic_area_um2=area,
        memory_bits=net.memory_bits,
        ff_bits=net.ff_bits,
        crit_path_ns=crit_ns,
        fmax_mhz=(1000.0 / crit_ns) if crit_ns > 0 else None,
        adp_um2_ns=area * crit_ns,
        throughput_ops=int(g.metadata.get("multiplier_count", 0)),
        ble_breakdown={t: net.count(t) for t in ("arith", "logic", "reg")},
    )


def adp_table(reports: dict[int, CostReport]) -> dict[int, float]:
    """Area-delay products normalized to the K=6 architecture."""
    if len(reports) < 2:
        raise ParameterError("need at least two architectures to normalize")
    if 6 not in reports:
        raise ParameterError("normalization reference K=6 missing")
    ref = reports[6].adp_um2_ns
    if ref == 0:
        return {k: (1.0 if r.adp_um2_ns == 0 else math.inf) for k, r in reports.items()}
    return {k: r.adp_um2_ns / ref for k, r in reports.items()}
