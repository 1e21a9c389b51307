"""Command-line surface tying generation, simulation, verification, and sweeps together.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .costmodel import ARCH_PRESETS, estimate, get_arch, load_arch_json
from .errors import ParameterError
from .kernels import KernelConfig, build_kernel, throughput_contract
from .golden import golden_outputs
from .presets import PRESET_NAMES, STUDY_KERNELS, preset_config
from .rtl import EmissionConfig, emit_flow_scripts, write_design
from .simulate import check_equivalence, simulate_kernel
from .sweep import SweepConfig, case_study, run_sweep, trend_report, trend_text
from .tensors import dump_tensor, generate_inputs, generate_weights


def _kernel_from_args(args) -> KernelConfig:
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        raw.setdefault("bits", args.bits)
        raw.setdefault("specialize", not args.generic)
        return KernelConfig(**raw)
    if not args.preset:
        raise ParameterError("need --preset or --config")
    return preset_config(args.preset, bits=args.bits, specialize=not args.generic)


def _add_design_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=PRESET_NAMES, help="named kernel size")
    p.add_argument("--config", help="JSON file with KernelConfig fields")
    p.add_argument("--sparsity", type=float, default=0.0)
    p.add_argument("--bits", type=int, default=8)
    p.add_argument("--generic", action="store_true",
                   help="generic MAC units instead of weight-specialized logic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")


def _arch_from_args(args):
    if args.arch_json:
        return load_arch_json(args.arch_json)
    return get_arch(args.arch)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="unrollfab",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit synthesizable source for one design")
    _add_design_args(p)
    p.add_argument("--top", default="kernel_top")
    p.add_argument("--reset", choices=["active_high", "active_low"], default="active_high")
    p.add_argument("--testbench", action="store_true")
    p.add_argument("--flow", choices=["quartus_like", "vtr_like"])
    p.add_argument("--netlist", action="store_true", help="also dump the IR netlist text")

    p = sub.add_parser("simulate", help="run one random stimulus through a design")
    _add_design_args(p)
    p.add_argument("--trace-csv", help="dump the cycle trace to CSV")

    p = sub.add_parser("verify", help="check graph-vs-golden equivalence")
    _add_design_args(p)
    p.add_argument("--trials", type=int, default=20)

    p = sub.add_parser("estimate", help="map a design and print its cost report")
    _add_design_args(p)
    p.add_argument("--arch", default="K6", choices=sorted(ARCH_PRESETS))
    p.add_argument("--arch-json", help="ArchParams from a JSON file")

    p = sub.add_parser("sweep", help="run a batch design-space sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--trends", action="store_true", help="print the trend report")

    p = sub.add_parser("case-study", help="LUT-size study over the three study kernels")
    p.add_argument("--kernels", nargs="+", default=list(STUDY_KERNELS))
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--out", default="out")

    p = sub.add_parser("emit-flow", help="flow scripts for already-emitted designs")
    p.add_argument("--target", choices=["quartus_like", "vtr_like"], required=True)
    p.add_argument("--designs", nargs="*", default=[],
                   help="top:source pairs, e.g. kernel_top:kernel_top.sv")
    p.add_argument("--out", default="out")
    return ap


def _cmd_generate(args) -> int:
    cfg = _kernel_from_args(args)
    weights = generate_weights(cfg.weight_shape(), args.sparsity, cfg.bits, seed=args.seed)
    graph = build_kernel(cfg, weights)
    ecfg = EmissionConfig(top=args.top, reset=args.reset,
                          include_testbench=args.testbench,
                          header={"seed": args.seed, "sparsity": args.sparsity})
    stim = expected = None
    if args.testbench:
        stim = generate_inputs(cfg.input_shape(), cfg.bits, seed=args.seed + 1)
        expected = golden_outputs(cfg, weights, stim)
    paths = write_design(graph, ecfg, args.out, stimulus=stim, expected=expected,
                         flow_target=args.flow)
    dest = paths[0].parent
    dump_tensor(weights, dest / "weights.txt")
    if args.netlist:
        (dest / "netlist.txt").write_text(graph.to_text())
    for p in paths:
        print(p)
    print(dest / "weights.txt")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _kernel_from_args(args)
    weights = generate_weights(cfg.weight_shape(), args.sparsity, cfg.bits, seed=args.seed)
    graph = build_kernel(cfg, weights)
    stim = generate_inputs(cfg.input_shape(), cfg.bits, seed=args.seed + 1)
    outputs, trace = simulate_kernel(cfg, graph, stim)
    print(json.dumps({
        "latency": graph.metadata["latency"],
        "cycles": trace.cycles,
        "outputs_head": outputs[:8],
        "output_count": len(outputs),
    }, sort_keys=True))
    if args.trace_csv:
        trace.to_csv(args.trace_csv)
    return 0


def _cmd_verify(args) -> int:
    cfg = _kernel_from_args(args)
    weights = generate_weights(cfg.weight_shape(), args.sparsity, cfg.bits, seed=args.seed)
    res = check_equivalence(cfg, weights, n_trials=args.trials, seed=args.seed)
    if res.passed:
        print(f"PASS: {res.trials} trials bit-exact")
        return 0
    print(f"FAIL: {json.dumps(res.counterexample, default=str)}")
    return 1


def _cmd_estimate(args) -> int:
    cfg = _kernel_from_args(args)
    weights = generate_weights(cfg.weight_shape(), args.sparsity, cfg.bits, seed=args.seed)
    graph = build_kernel(cfg, weights)
    report = estimate(graph, _arch_from_args(args))
    contract = throughput_contract(graph)
    payload = json.loads(report.to_json())
    payload["contract"] = {
        "inputs_per_cycle": contract.inputs_per_cycle,
        "outputs_per_cycle": contract.outputs_per_cycle,
        "weight_duplication": contract.weight_duplication,
    }
    print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    cfg = SweepConfig.from_json(args.config)
    if args.workers is not None:
        cfg = SweepConfig(**{**cfg.__dict__, "workers": args.workers})
    rows, summary, failures = run_sweep(cfg)
    print(f"{len(rows)} rows -> {cfg.out_dir}/results.csv ({failures} failures)")
    if args.trends:
        print(trend_text(trend_report(rows)), end="")
    return 1 if failures else 0


def _cmd_case_study(args) -> int:
    result = case_study(kernels=tuple(args.kernels), seeds=args.seeds, out_dir=args.out)
    print(result["table"])
    for note in result["notes"]:
        print(note)
    return 0


def _cmd_emit_flow(args) -> int:
    designs = []
    for item in args.designs:
        top, _, src = item.partition(":")
        designs.append((top, src or f"{top}.sv"))
    files = emit_flow_scripts(designs, args.target)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (out / name).write_text(files[name])
        print(out / name)
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "estimate": _cmd_estimate,
    "sweep": _cmd_sweep,
    "case-study": _cmd_case_study,
    "emit-flow": _cmd_emit_flow,
}


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ParameterError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
