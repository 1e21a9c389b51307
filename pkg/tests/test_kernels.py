import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from unrollfab.errors import ParameterError, ShapeError
from unrollfab.graph import ARITH_KINDS, SEQ_KINDS
from unrollfab.kernels import (VALID_PAIRS, KernelConfig, build_conv, build_gemms,
                               build_gemmt, build_kernel, expected_contract,
                               pipeline, throughput_contract)
from unrollfab.tensors import WeightTensor, generate_weights


def dense(shape, bits=8, seed=0):
    return generate_weights(shape, 0.0, bits, seed=seed)


def count(g, kind):
    return sum(1 for n in g.nodes if n.kind == kind)


def register_bits(g):
    return sum(n.width * (n.p("depth", 1) if n.kind == "shift_register_chain" else 1)
               for n in g.nodes
               if n.kind in ("register", "shift_register_chain"))


def longest_register_path(g):
    """Independent latency oracle: DP over the DAG counting sequential depth."""
    lat = {}
    for nid in g.topo_order():
        n = g.node(nid)
        if n.kind == "constant":
            lat[nid] = None
            continue
        ins = [lat[i] for i in n.ins if lat[i] is not None]
        base = max(ins) if ins else (0 if n.kind in SEQ_KINDS else None)
        step = 0
        if n.kind in ("register", "memory"):
            step = 1
        elif n.kind == "shift_register_chain":
            step = n.p("depth", 1)
        lat[nid] = None if base is None and n.kind not in SEQ_KINDS else (base or 0) + step
    return [lat[g.node(o).ins[0]] or 0 for o in g.outputs]


# -- gemmt --------------------------------------------------------------------

def test_gemmt_rp_32_dense_counts():
    cfg = KernelConfig("gemmt", "row_parallel", m=1, n=32, p=32, bits=8)
    g = build_kernel(cfg, dense((32, 32)))
    assert g.metadata["multiplier_count"] == 1024
    assert len(g.outputs) == 32
    assert throughput_contract(g).outputs_per_cycle == (1, 32)


def test_gemmt_fu_duplicates_weights():
    w = dense((10, 10))
    assert w.nnz == 100
    cfg = KernelConfig("gemmt", "fully_unrolled", m=2, n=10, p=10, bits=8)
    g = build_kernel(cfg, w)
    assert g.metadata["multiplier_count"] == 200
    assert g.metadata["duplication"] == 2


def test_gemmt_zero_column_is_constant_zero():
    vals = [1, 0, 2, 0, 3, 0, 4, 0]  # column 1 all zero
    w = WeightTensor((4, 2), 8, 0.5, 0, tuple(vals))
    cfg = KernelConfig("gemmt", "row_parallel", m=1, n=4, p=2, bits=8)
    g = build_kernel(cfg, w)
    drv = g.node(g.outputs[1])
    src = g.node(drv.ins[0])
    assert src.kind == "constant" and src.p("value") == 0


def test_gemmt_fu_output_is_m_by_p():
    cfg = KernelConfig("gemmt", "fully_unrolled", m=3, n=4, p=5, bits=4)
    g = build_kernel(cfg, dense((4, 5), bits=4))
    c = throughput_contract(g)
    assert c.inputs_per_cycle == (3, 4)
    assert c.outputs_per_cycle == (3, 5)
    assert len(g.outputs) == 15


# -- gemms --------------------------------------------------------------------

def test_gemms_dense_grid():
    cfg = KernelConfig("gemms", "row_parallel", m=16, n=16, p=16, bits=8)
    g = build_kernel(cfg, dense((16, 16)))
    assert g.metadata["multiplier_count"] == 256


def test_gemms_sparse_keeps_structural_registers():
    cfg = KernelConfig("gemms", "row_parallel", m=16, n=16, p=16, bits=8)
    wd = generate_weights((16, 16), 0.0, 8, seed=1)
    ws = generate_weights((16, 16), 0.9, 8, seed=1)
    gd = build_kernel(cfg, wd)
    gs = build_kernel(cfg, ws)
    assert gs.metadata["multiplier_count"] == ws.nnz == 26
    # pruning removes multiplier-internal delay only; the x-forward and
    # partial-sum stage registers survive
    assert register_bits(gs) >= 0.5 * register_bits(gd)
    x_regs = 16 * 15 * 8 + sum(range(16)) * 8  # forwarding plus boundary skew
    assert register_bits(gs) >= x_regs


def test_family_builders_check_dispatch():
    gemm_cfg = KernelConfig("gemmt", "row_parallel", m=1, n=2, p=2)
    with pytest.raises(ParameterError):
        build_gemms(gemm_cfg, dense((2, 2)))
    with pytest.raises(ParameterError):
        build_conv(gemm_cfg, dense((2, 2)))
    conv_cfg = KernelConfig("conv1d", "pixelwise", in_w=4, in_c=1, f_w=2, out_c=1)
    with pytest.raises(ParameterError):
        build_gemmt(conv_cfg, dense((2, 1, 1, 1)))
    g = build_gemmt(gemm_cfg, dense((2, 2)))
    assert len(g.outputs) == 2


# -- conv ---------------------------------------------------------------------

def test_conv2d_pixelwise_small_counts():
    cfg = KernelConfig("conv2d", "pixelwise", in_w=7, in_h=7, in_c=3,
                       f_w=3, f_h=3, out_c=4, bits=8)
    g = build_kernel(cfg, dense((3, 3, 3, 4)))
    assert cfg.out_w == 5 and cfg.out_h == 5
    assert len(g.outputs) == 4
    assert g.metadata["multiplier_count"] == 3 * 3 * 3 * 4
    assert g.metadata["memory_bits"] == 7 * 7 * 3 * 8
    assert count(g, "counter") == 1
    assert count(g, "memory") == 3 * 3 * 3  # one read tap per window scalar


def test_conv2d_pixelwise_study_shape():
    cfg = KernelConfig("conv2d", "pixelwise", in_w=25, in_h=25, in_c=32,
                       f_w=3, f_h=3, out_c=64, bits=8)
    w = generate_weights((3, 3, 32, 64), 0.5, 8, seed=0)
    g = build_kernel(cfg, w)
    assert cfg.output_shape() == (23, 23, 64)
    assert len(g.outputs) == 64
    assert g.metadata["multiplier_count"] == w.nnz
    c = throughput_contract(g)
    assert c.inputs_per_cycle == (3, 3, 32)
    assert c.outputs_per_cycle == (1, 1, 64)


def test_conv2d_fully_unrolled_duplication():
    cfg = KernelConfig("conv2d", "fully_unrolled", in_w=8, in_h=8, in_c=4,
                       f_w=3, f_h=3, out_c=4, bits=8)
    w = dense((3, 3, 4, 4))
    g = build_kernel(cfg, w)
    assert cfg.out_w == 6 and cfg.out_h == 6
    assert g.metadata["duplication"] == 36
    assert g.metadata["multiplier_count"] == 36 * w.nnz


def test_conv1d_output_width():
    cfg = KernelConfig("conv1d", "pixelwise", in_w=32, in_c=2, f_w=3, out_c=2, bits=8)
    assert cfg.out_w == 30
    assert cfg.out_h == 1


def test_conv1d_rejects_tall_input():
    with pytest.raises(ParameterError):
        KernelConfig("conv1d", "pixelwise", in_w=8, in_h=2, in_c=1, f_w=3, out_c=1)


def test_conv_rejects_oversized_filter():
    with pytest.raises(ParameterError):
        KernelConfig("conv2d", "pixelwise", in_w=3, in_h=3, in_c=1,
                     f_w=4, f_h=3, out_c=1)


def test_conv2d_rp_window_chains():
    cfg = KernelConfig("conv2d", "row_parallel", in_w=6, in_h=6, in_c=2,
                       f_w=3, f_h=3, out_c=2, bits=4)
    g = build_kernel(cfg, dense((3, 3, 2, 2), bits=4))
    assert g.metadata["warmup"] == 2
    c = throughput_contract(g)
    assert c.inputs_per_cycle == (6, 3, 2)
    assert c.outputs_per_cycle == (4, 1, 2)
    assert c.weight_duplication == 4
    assert len(g.inputs) == 6 * 2  # one row of pixels per beat


# -- contracts for every supported pair ----------------------------------------

ALL_PAIRS = [
    KernelConfig("gemmt", "row_parallel", m=2, n=4, p=3, bits=4),
    KernelConfig("gemmt", "fully_unrolled", m=2, n=3, p=4, bits=4),
    KernelConfig("gemms", "row_parallel", m=2, n=4, p=4, bits=4),
    KernelConfig("conv1d", "pixelwise", in_w=6, in_c=2, f_w=3, out_c=2, bits=4),
    KernelConfig("conv1d", "fully_unrolled", in_w=6, in_c=2, f_w=3, out_c=2, bits=4),
    KernelConfig("conv2d", "pixelwise", in_w=5, in_h=5, in_c=2, f_w=3, f_h=3, out_c=2, bits=4),
    KernelConfig("conv2d", "row_parallel", in_w=5, in_h=5, in_c=2, f_w=3, f_h=3, out_c=2, bits=4),
    KernelConfig("conv2d", "fully_unrolled", in_w=5, in_h=5, in_c=2, f_w=3, f_h=3, out_c=2, bits=4),
]


@pytest.mark.parametrize("cfg", ALL_PAIRS, ids=lambda c: f"{c.family}-{c.unroll}")
def test_contract_matches_table(cfg):
    w = generate_weights(cfg.weight_shape(), 0.4, cfg.bits, seed=3)
    g = build_kernel(cfg, w)
    assert throughput_contract(g) == expected_contract(cfg)


@pytest.mark.parametrize("cfg", ALL_PAIRS, ids=lambda c: f"{c.family}-{c.unroll}")
def test_validation_and_latency_metadata(cfg):
    # on dense builds the schedule latency equals the longest register path
    # (no window tap is pruned, so the full warm-up chain survives)
    w = generate_weights(cfg.weight_shape(), 0.0, cfg.bits, seed=5)
    g = build_kernel(cfg, w)
    g.validate()
    assert g.metadata["per_output_latency"] == longest_register_path(g)


def test_sparse_window_latency_keeps_warmup():
    # pruning the oldest window row must not shift the sampling schedule
    cfg = KernelConfig("conv2d", "row_parallel", in_w=3, in_h=4, in_c=1,
                       f_w=1, f_h=3, out_c=1, bits=8)
    vals = (0, 5, 7)  # tap dy=0 pruned everywhere
    w = WeightTensor((1, 3, 1, 1), 8, 0.0, 0, vals)
    g = build_kernel(cfg, w)
    assert g.metadata["warmup"] == 2
    assert all(lat >= 2 for lat in g.metadata["per_output_latency"])
    from unrollfab.simulate import check_equivalence
    assert check_equivalence(cfg, w, n_trials=4, seed=0).passed


def test_invalid_pair_rejected():
    with pytest.raises(ParameterError):
        KernelConfig("gemms", "fully_unrolled", m=2, n=2, p=2)
    with pytest.raises(ParameterError):
        KernelConfig("conv1d", "row_parallel", in_w=4, in_c=1, f_w=2, out_c=1)


def test_weight_shape_mismatch_rejected():
    cfg = KernelConfig("gemmt", "row_parallel", m=1, n=4, p=4)
    with pytest.raises(ShapeError):
        build_kernel(cfg, dense((4, 3)))
    with pytest.raises(ShapeError):
        build_kernel(cfg, dense((4, 4), bits=4))


# -- pruning accounting and monotonicity ---------------------------------------

@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5),
       st.sampled_from([0.0, 0.3, 0.7, 1.0]), st.integers(0, 30))
@settings(max_examples=40, deadline=None)
def test_multiplier_accounting_gemmt(n, p, m, s, seed):
    w = generate_weights((n, p), s, 8, seed=seed)
    g = build_kernel(KernelConfig("gemmt", "fully_unrolled", m=m, n=n, p=p), w)
    assert g.metadata["multiplier_count"] == m * w.nnz


def test_node_count_monotone_in_sparsity():
    cfg = KernelConfig("gemmt", "row_parallel", m=1, n=12, p=12, bits=8)
    sizes = []
    for s in (0.0, 0.3, 0.6, 0.9):
        g = build_kernel(cfg, generate_weights((12, 12), s, 8, seed=2))
        sizes.append(len(g))
    assert sizes == sorted(sizes, reverse=True)


def test_generic_counts_ignore_weights():
    cfg = KernelConfig("conv1d", "fully_unrolled", in_w=5, in_c=2, f_w=2, out_c=2,
                       bits=8, specialize=False)
    g1 = build_kernel(cfg, generate_weights((2, 1, 2, 2), 0.0, 8, seed=1))
    g2 = build_kernel(cfg, generate_weights((2, 1, 2, 2), 1.0, 8, seed=9))
    assert len(g1) == len(g2)
    assert count(g1, "add") == count(g2, "add")
    assert count(g1, "sub") == count(g2, "sub")


# -- the pipelining pass --------------------------------------------------------

def build_raw_tree(leaves, width=8):
    """Unpipelined balanced adder tree over fresh input ports."""
    from unrollfab.graph import DataflowGraph
    g = DataflowGraph()
    items = [g.add("input_port", width, name=f"x_{i}") for i in range(leaves)]
    level = 0
    while len(items) > 1:
        level += 1
        nxt = []
        for k in range(0, len(items) - 1, 2):
            a, b = items[k], items[k + 1]
            nxt.append(g.add("add", max(g.node(a).width, g.node(b).width) + 1, (a, b)))
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    g.add("output_port", g.node(items[0]).width, (items[0],), name="y")
    return g


def test_pipeline_32_leaf_tree_has_5_stages():
    g = pipeline(build_raw_tree(32))
    assert g.metadata["latency"] >= 5
    g.validate()


def test_pipeline_balances_all_paths():
    # every leaf-to-root path must cross the same number of registers
    g = pipeline(build_raw_tree(11))
    lat = {}
    for nid in g.topo_order():
        n = g.node(nid)
        if n.kind == "input_port":
            lat[nid] = {0}
        elif n.kind == "register":
            lat[nid] = {v + 1 for v in lat[n.ins[0]]}
        elif n.kind == "shift_register_chain":
            lat[nid] = {v + n.p("depth") for v in lat[n.ins[0]]}
        elif n.kind == "constant":
            lat[nid] = set()
        else:
            merged = set()
            for i in n.ins:
                merged |= lat[i]
            lat[nid] = merged
    root = g.node(g.outputs[0]).ins[0]
    assert len(lat[root]) == 1


def test_pipeline_is_idempotent():
    g = pipeline(build_raw_tree(8))
    nodes_before = len(g)
    pipeline(g)
    assert len(g) == nodes_before


def test_gemmt_rp_latency_regression():
    # locked from the longest-path oracle on the dense 32x32 8-bit build
    cfg = KernelConfig("gemmt", "row_parallel", m=1, n=32, p=32, bits=8)
    g = build_kernel(cfg, dense((32, 32), seed=0))
    assert g.metadata["latency"] == longest_register_path(g)[0] == 7


def test_arith_never_stacks_between_registers():
    cfg = KernelConfig("conv2d", "fully_unrolled", in_w=5, in_h=5, in_c=2,
                       f_w=3, f_h=3, out_c=3, bits=8)
    g = build_kernel(cfg, generate_weights((3, 3, 2, 3), 0.2, 8, seed=8))
    depth = {}
    for nid in g.topo_order():
        n = g.node(nid)
        if n.kind in SEQ_KINDS or n.kind in ("input_port", "constant"):
            depth[nid] = 0
            continue
        base = max((depth[i] for i in n.ins), default=0)
        if n.kind in ARITH_KINDS:
            base += 1
        assert base <= 1
        depth[nid] = base


def test_netlist_text_export_stable():
    cfg = KernelConfig("gemmt", "row_parallel", m=1, n=2, p=2, bits=2)
    w = dense((2, 2), bits=2, seed=4)
    a = build_kernel(cfg, w).to_text()
    b = build_kernel(cfg, w).to_text()
    assert a == b
    assert "outputs:" in a


def test_netlist_text_golden():
    # frozen IR listing for one tiny design; catches accidental builder drift
    w = WeightTensor((2, 1), 2, 0.0, 0, (1, -2))
    cfg = KernelConfig("gemmt", "row_parallel", m=1, n=2, p=1, bits=2)
    g = build_kernel(cfg, w)
    assert g.to_text() == (
        "n0 input_port w=2 stage=0 ins=[] name=x_0\n"
        "n1 input_port w=2 stage=0 ins=[] name=x_1\n"
        "n2 shift w=3 stage=0 ins=[1] amount=1\n"
        "n3 sub w=5 stage=1 ins=[0,2] wrule=fixed\n"
        "n4 output_port w=5 stage=1 ins=[5] name=y_0\n"
        "n5 register w=5 stage=1 ins=[3]\n"
        "inputs: 0 1\n"
        "outputs: 4\n"
        "meta beats: 1\n"
        "meta duplication: 1\n"
        "meta family: gemmt\n"
        "meta inputs_per_cycle: (1, 2)\n"
        "meta latency: 1\n"
        "meta memory_bits: 0\n"
        "meta multiplier_count: 2\n"
        "meta nnz_used: 2\n"
        "meta outputs_per_cycle: (1, 1)\n"
        "meta per_output_latency: [1]\n"
        "meta pipelined: True\n"
        "meta ports_per_beat: (1, 2)\n"
        "meta unroll: row_parallel\n"
        "meta warmup: 0\n"
        "meta weights_seed: 0\n"
        "meta weights_sparsity: 0.0\n"
    )


@given(st.sampled_from(sorted(VALID_PAIRS)), st.sampled_from([1, 2, 4, 8]),
       st.floats(0, 1), st.integers(0, 999))
@settings(max_examples=60, deadline=None)
def test_random_kernels_always_validate(pair, bits, sparsity, seed):
    import random as _random
    rng = _random.Random(seed)
    family, unroll = pair
    if family in ("gemmt", "gemms"):
        cfg = KernelConfig(family, unroll, m=rng.randint(1, 4), n=rng.randint(1, 6),
                           p=rng.randint(1, 6), bits=bits)
    else:
        f_w = rng.randint(1, 3)
        f_h = 1 if family == "conv1d" else rng.randint(1, 3)
        cfg = KernelConfig(family, unroll, in_w=rng.randint(f_w, 6),
                           in_h=1 if family == "conv1d" else rng.randint(f_h, 6),
                           in_c=rng.randint(1, 3), f_w=f_w, f_h=f_h,
                           out_c=rng.randint(1, 3), bits=bits)
    w = generate_weights(cfg.weight_shape(), sparsity, bits, seed=seed)
    g = build_kernel(cfg, w)
    g.validate()
    assert throughput_contract(g) == expected_contract(cfg)
    if cfg.specialize:
        assert g.metadata["multiplier_count"] == g.metadata["duplication"] * w.nnz
