"""Constant-multiplier subgraphs.

Specialized multipliers recode the fixed weight in canonical signed digit
(CSD) form and realize it as a shift-add network: d nonzero digits cost d - 1
adders, powers of two are pure wiring, zero weights vanish. Generic (non
specialized) multipliers expand to the classic gated partial-product array so
their node count is independent of the weight value.

Builders fold a product's overall sign into the consuming adder tree, so
multiplier subgraphs report (root, sign, depth) rather than emitting a final
negation. The standalone :func:`specialize_multiplier` wrapper materializes
the sign for inspection.
"""
from __future__ import annotations

import math
from typing import Callable

from .graph import DataflowGraph
from .tensors import value_range


def csd_digits(value: int) -> list[int]:
    """LSB-first digits in {-1, 0, +1}; sum(d_i * 2^i) == value, no two adjacent nonzero."""
    digits: list[int] = []
    w = int(value)
    while w != 0:
        if w & 1:
            d = 2 - (w & 3)  # w % 4 == 1 -> +1, == 3 -> -1
            w -= d
            digits.append(d)
        else:
            digits.append(0)
        w >>= 1
    return digits


def csd_terms(value: int) -> list[tuple[int, int]]:
    """(bit position, sign) for each nonzero CSD digit."""
    return [(pos, d) for pos, d in enumerate(csd_digits(value)) if d]


def mult_depth(weight: int, bits: int, specialize: bool) -> int:
    """Registered adder levels the multiplier will occupy once pipelined."""
    if specialize:
        t = len(csd_terms(weight))
        return 0 if t <= 1 else math.ceil(math.log2(t))
    return 0 if bits == 1 else math.ceil(math.log2(bits))


def combine_signed(
    g: DataflowGraph,
    items: list[tuple[int, int]],
    width_fn: Callable[[int, int, int], int],
    wrule: str = "max1",
) -> tuple[int, int, int]:
    """Balanced left-to-right reduction of signed terms into one (node, sign).

    ``width_fn(level, a_nid, b_nid)`` supplies the width of each created node.
    Returns (root nid, sign of root, number of reduction rounds).
    """
    level = 0
    while len(items) > 1:
        level += 1
        nxt: list[tuple[int, int]] = []
        for k in range(0, len(items) - 1, 2):
            a, sa = items[k]
            b, sb = items[k + 1]
            if sa == sb:
                kind, sign = "add", sa
            elif sa > 0:
                kind, sign = "sub", 1
            else:
                kind, sign = "sub", 1
                a, b = b, a
            nid = g.add(kind, width_fn(level, a, b), (a, b), wrule=wrule)
            nxt.append((nid, sign))
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    root, sign = items[0]
    return root, sign, level


def _max1(g: DataflowGraph):
    return lambda level, a, b: max(g.node(a).width, g.node(b).width) + 1


def build_multiplier(
    g: DataflowGraph, x: int, weight: int, bits: int, specialize: bool
) -> tuple[int | None, int, int]:
    """Multiply node ``x`` by a constant. Returns (root nid or None, sign, depth).

    A None root means the product is identically zero (pruned leaf). The sign
    applies to the value at root; callers subtract instead of add when it is
    negative.
    """
    if specialize:
        if weight == 0:
            return None, 1, 0
        terms = csd_terms(weight)
        items: list[tuple[int, int]] = []
        for pos, sign in terms:
            n = x if pos == 0 else g.add("shift", g.node(x).width + pos, (x,), amount=pos)
            items.append((n, sign))
        if len(items) == 1:
            return items[0][0], items[0][1], 0
        root, sign, depth = combine_signed(g, items, _max1(g))
        return root, sign, depth

    # generic: gated partial products for every weight bit, sign row subtracted
    xw = g.node(x).width
    if bits == 1:
        gate = g.add("constant", 1, value=weight & 1)
        return g.add("and_gate", xw, (x, gate)), 1, 0
    rows: list[tuple[int, int]] = []
    for j in range(bits):
        gate = g.add("constant", 1, value=(weight >> j) & 1)
        pp = g.add("and_gate", xw, (x, gate))
        if j:
            pp = g.add("shift", xw + j, (pp,), amount=j)
        rows.append((pp, -1 if j == bits - 1 else 1))
    return combine_signed(g, rows, _max1(g))


def specialize_multiplier(weight: int, operand_width: int) -> DataflowGraph:
    """Standalone constant-multiplier graph for a single operand input.

    The graph's ``root`` metadata names the product node (None when the weight
    is zero and the product is pruned away entirely).
    """
    lo, hi = value_range(max(operand_width, 2))
    g = DataflowGraph()
    x = g.add("input_port", operand_width, name="x")
    root, sign, depth = build_multiplier(g, x, weight, operand_width, specialize=True)
    if root is not None and sign < 0:
        zero = g.add("constant", 1, value=0)
        root = g.add("sub", g.node(root).width + 1, (zero, root), wrule="max1")
    g.metadata.update(root=root, depth=depth, weight=int(weight))
    if root is not None:
        g.add("output_port", g.node(root).width, (root,), name="p")
    return g
