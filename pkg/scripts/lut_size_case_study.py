#!/usr/bin/env python3
"""LUT-size architecture study over the three study kernels.

Maps each (kernel, sparsity, precision) design point onto the K=3..6 logic
block presets and reports kLBs, silicon area, modeled delay, and normalized
area-delay product. Expect roughly a 2x area advantage for K=3 over K=6 at
equal packing, with the ADP optimum at the smallest LUT size.
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from unrollfab.presets import STUDY_KERNELS
from unrollfab.sweep import case_study


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kernels", nargs="+", default=list(STUDY_KERNELS))
    ap.add_argument("--seeds", type=int, default=1)
    ap.add_argument("--out", default="out/case_study")
    args = ap.parse_args()

    result = case_study(kernels=tuple(args.kernels), seeds=args.seeds, out_dir=args.out)
    print(result["table"])
    for note in result["notes"]:
        print(note)
    print(f"tables -> {args.out}/case_study.csv, {args.out}/adp.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
