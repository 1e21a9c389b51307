#!/usr/bin/env python3
"""Sweep the small presets over the sparsity grid and the precision set.

Writes results.csv / summary.csv plus a trend report under --out. The default
settings reproduce the headline efficiency trends: near-linear area reduction
with sparsity for adder-tree kernels, sub-linear for the systolic GEMM, and
super-linear shrinkage with lower precision.
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from unrollfab.sweep import SweepConfig, run_sweep, trend_report, trend_text
from unrollfab.tensors import sparsity_grid


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--presets", nargs="+",
                    default=["gemmt-RP-S", "gemms-RP-S", "conv2d-RP-S", "conv2d-FU-S"])
    ap.add_argument("--precisions", nargs="+", type=int, default=[1, 2, 4, 8])
    ap.add_argument("--arch", default="K6")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/sweep")
    args = ap.parse_args()

    cfg = SweepConfig(
        presets=tuple(args.presets),
        sparsities=tuple(sparsity_grid()),
        precisions=tuple(args.precisions),
        archs=(args.arch,),
        seeds=args.seeds,
        verify="auto",
        out_dir=args.out,
        workers=args.workers,
    )
    rows, _, failures = run_sweep(cfg)
    text = trend_text(trend_report(rows))
    Path(args.out, "trends.txt").write_text(text)
    print(text)
    print(f"{len(rows)} rows -> {args.out}/results.csv ({failures} failures)")
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
