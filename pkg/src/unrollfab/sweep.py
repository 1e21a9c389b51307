"""Design-space sweeps, trend analysis, and the LUT-size case study.

A sweep enumerates the cross product of presets x sparsities x precisions x
architectures x seeds, builds and costs every point, optionally verifies it
(full simulation on small points, structural count checks on large ones), and
writes tidy CSV. Row order is the enumeration order, independent of worker
count, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .costmodel import adp_table, estimate, get_arch
from .errors import ParameterError
from .graph import DataflowGraph
from .kernels import KernelConfig, build_kernel, expected_contract, throughput_contract
from .presets import STUDY_KERNELS, preset_config
from .simulate import check_equivalence
from .tensors import generate_weights

RESULT_COLUMNS = [
    "preset", "family", "unroll", "sparsity", "bits", "arch", "seed",
    "nnz", "multiplier_count", "duplication", "node_count", "latency",
    "ble_count", "lb_count", "logic_area_um2", "memory_bits", "ff_bits",
    "crit_path_ns", "fmax_mhz", "adp_um2_ns", "throughput_ops",
    "norm_ble_vs_dense", "norm_area_vs_dense", "verified",
]

# verification budget for "auto" mode: full simulation only on small points
_SIM_MULT_LIMIT = 3000
_SIM_BEAT_LIMIT = 64


@dataclass(frozen=True)
class SweepConfig:
    presets: tuple[str, ...]
    sparsities: tuple[float, ...]
    precisions: tuple[int, ...]
    archs: tuple[str, ...] = ("K6",)
    seeds: int = 3
    verify: str = "auto"  # auto | full | counts | none
    out_dir: str = "out"
    workers: int = 1

    @staticmethod
    def from_json(path) -> "SweepConfig":
        with open(path) as fh:
            raw = json.load(fh)
        raw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
        try:
            return SweepConfig(**raw)
        except TypeError as exc:
            raise ParameterError(f"bad sweep config {path}: {exc}") from exc

    def points(self) -> list[dict]:
        if self.verify not in ("auto", "full", "counts", "none"):
            raise ParameterError(f"unknown verify mode {self.verify!r}")
        out = []
        for preset in self.presets:
            for s in self.sparsities:
                for b in self.precisions:
                    for arch in self.archs:
                        for seed in range(self.seeds):
                            out.append(dict(preset=preset, sparsity=float(s),
                                            bits=int(b), arch=arch, seed=seed,
                                            verify=self.verify))
        return out


def _verify_point(cfg: KernelConfig, weights, graph: DataflowGraph, mode: str) -> str:
    if mode == "none":
        return "skipped"
    counts_ok = (
        throughput_contract(graph) == expected_contract(cfg)
        and (not cfg.specialize
             or graph.metadata["multiplier_count"]
             == graph.metadata["duplication"] * weights.nnz))
    if not counts_ok:
        return "fail:counts"
    if mode == "counts":
        return "counts-ok"
    from .simulate import logical_beats
    small = (graph.metadata["multiplier_count"] <= _SIM_MULT_LIMIT
             and logical_beats(cfg) <= _SIM_BEAT_LIMIT)
    if mode == "auto" and not small:
        return "counts-ok"
    res = check_equivalence(cfg, weights, n_trials=2, seed=cfg.bits * 7 + 1, graph=graph)
    return "sim-ok" if res.passed else "fail:mismatch"


def run_point(point: dict) -> dict:
    """Build, cost, and verify one sweep point; returns a flat result row."""
    cfg = preset_config(point["preset"], bits=point["bits"],
                        specialize=point.get("specialize", True))
    weights = generate_weights(cfg.weight_shape(), point["sparsity"], point["bits"],
                               seed=point["seed"])
    graph = build_kernel(cfg, weights)
    report = estimate(graph, get_arch(point["arch"]))
    verdict = _verify_point(cfg, weights, graph, point.get("verify", "none"))
    return {
        "preset": point["preset"], "family": cfg.family, "unroll": cfg.unroll,
        "sparsity": point["sparsity"], "bits": point["bits"],
        "arch": point["arch"], "seed": point["seed"],
        "nnz": weights.nnz,
        "multiplier_count": graph.metadata["multiplier_count"],
        "duplication": graph.metadata["duplication"],
        "node_count": len(graph), "latency": graph.metadata["latency"],
        "ble_count": report.ble_count, "lb_count": report.lb_count,
        "logic_area_um2": report.logic_area_um2, "memory_bits": report.memory_bits,
        "ff_bits": report.ff_bits, "crit_path_ns": round(report.crit_path_ns, 6),
        "fmax_mhz": round(report.fmax_mhz, 3) if report.fmax_mhz else "",
        "adp_um2_ns": round(report.adp_um2_ns, 3),
        "throughput_ops": report.throughput_ops,
        "norm_ble_vs_dense": "", "norm_area_vs_dense": "",
        "verified": verdict,
    }


def _normalize(rows: list[dict]) -> None:
    """Fill the vs-dense columns: anchor is (sparsity 0, widest precision)."""
    max_bits: dict[tuple, int] = {}
    for r in rows:
        key = (r["preset"], r["arch"], r["seed"])
        max_bits[key] = max(max_bits.get(key, 0), r["bits"])
    anchors = {}
    for r in rows:
        key = (r["preset"], r["arch"], r["seed"])
        if r["sparsity"] == 0.0 and r["bits"] == max_bits[key]:
            anchors[key] = r
    for r in rows:
        a = anchors.get((r["preset"], r["arch"], r["seed"]))
        if a is None or a["ble_count"] == 0:
            r["norm_ble_vs_dense"] = "no-anchor"
            r["norm_area_vs_dense"] = "no-anchor"
        else:
            r["norm_ble_vs_dense"] = round(r["ble_count"] / a["ble_count"], 6)
            r["norm_area_vs_dense"] = round(r["logic_area_um2"] / a["logic_area_um2"], 6)


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in columns})
    path.write_text(buf.getvalue())


def run_sweep(cfg: SweepConfig) -> tuple[list[dict], list[dict], int]:
    """Execute the sweep; writes results.csv and summary.csv under out_dir.

    Returns (rows, per-seed-averaged summary rows, number of failed points).
    Point failures are recorded in the row and do not abort the sweep.
    """
    points = cfg.points()
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(run_point, points, chunksize=1))
    else:
        rows = [run_point(p) for p in points]
    _normalize(rows)

    summary: dict[tuple, dict] = {}
    for r in rows:
        key = (r["preset"], r["sparsity"], r["bits"], r["arch"])
        agg = summary.setdefault(key, {
            "preset": r["preset"], "sparsity": r["sparsity"], "bits": r["bits"],
            "arch": r["arch"], "seeds": 0, "ble_count": 0.0, "lb_count": 0.0,
            "logic_area_um2": 0.0, "crit_path_ns": 0.0, "adp_um2_ns": 0.0,
        })
        agg["seeds"] += 1
        for k in ("ble_count", "lb_count", "logic_area_um2", "crit_path_ns", "adp_um2_ns"):
            agg[k] += float(r[k])
    summary_rows = []
    for key in sorted(summary, key=str):
        agg = summary[key]
        n = agg.pop("seeds")
        for k in ("ble_count", "lb_count", "logic_area_um2", "crit_path_ns", "adp_um2_ns"):
            agg[k] = round(agg[k] / n, 6)
        agg["seeds"] = n
        summary_rows.append(agg)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "results.csv", rows, RESULT_COLUMNS)
    _write_csv(out / "summary.csv", summary_rows,
               ["preset", "sparsity", "bits", "arch", "seeds", "ble_count",
                "lb_count", "logic_area_um2", "crit_path_ns", "adp_um2_ns"])
    failures = sum(1 for r in rows if str(r["verified"]).startswith("fail"))
    return rows, summary_rows, failures


# -- trend analysis -----------------------------------------------------------


def _r_squared(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    design = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    resid = ys - design @ coef
    total = ((ys - ys.mean()) ** 2).sum()
    r2 = 1.0 if total == 0 else 1.0 - (resid ** 2).sum() / total
    return float(coef[0]), float(r2)


def trend_report(rows: list[dict]) -> dict:
    """Per-series least-squares fit of normalized area vs sparsity.

    A series is one (preset, bits, arch); values are seed-averaged BLE counts
    renormalized to the series' own dense point. Also reports the coarse
    precision-scaling ratios area(b) / area(b/2) at zero sparsity. Series with
    fewer than three sparsity points are skipped with a notice.
    """
    series: dict[tuple, dict[float, list[float]]] = {}
    areas: dict[tuple, list[float]] = {}
    for r in rows:
        key = (r["preset"], r["bits"], r["arch"])
        series.setdefault(key, {}).setdefault(float(r["sparsity"]), []).append(
            float(r["ble_count"]))
        if float(r["sparsity"]) == 0.0:
            areas.setdefault(key, []).append(float(r["logic_area_um2"]))

    out: dict = {"series": {}, "skipped": [], "precision_ratios": {}, "flags": []}
    for key in sorted(series, key=str):
        pts = series[key]
        if len(pts) < 3:
            out["skipped"].append({"series": key, "reason": f"{len(pts)} sparsity points"})
            continue
        xs = np.array(sorted(pts))
        ys = np.array([np.mean(pts[s]) for s in sorted(pts)])
        if ys[0] == 0 or 0.0 not in pts:
            out["skipped"].append({"series": key, "reason": "no dense anchor"})
            continue
        norm = ys / ys[0]
        slope, r2 = _r_squared(xs, norm)
        endpoint = float(norm[-1]) if xs[-1] >= 0.9 else None
        entry = {"slope": round(slope, 4), "r2": round(r2, 5),
                 "endpoint_s09": None if endpoint is None else round(endpoint, 4)}
        out["series"][key] = entry
        preset = key[0]
        if endpoint is not None:
            if preset.startswith("gemms") and endpoint < 0.40:
                out["flags"].append({"series": key, "flag": "systolic pruned below retention floor"})
            if not preset.startswith("gemms") and endpoint > 0.25:
                out["flags"].append({"series": key, "flag": "tree kernel prunes sub-linearly"})

    for (preset, bits, arch) in sorted(areas, key=str):
        lower = (preset, bits // 2, arch)
        if bits >= 2 and lower in areas:
            hi = float(np.mean(areas[(preset, bits, arch)]))
            lo = float(np.mean(areas[lower]))
            if lo > 0:
                out["precision_ratios"][(preset, bits, arch)] = round(hi / lo, 4)
    return out


def trend_text(report: dict) -> str:
    lines = ["series fits (normalized BLE count vs sparsity):"]
    for key, e in report["series"].items():
        lines.append(f"  {key}: slope={e['slope']} r2={e['r2']} endpoint@0.9={e['endpoint_s09']}")
    for sk in report["skipped"]:
        lines.append(f"  skipped {sk['series']}: {sk['reason']}")
    lines.append("precision scaling area(b)/area(b/2) at s=0:")
    for key, v in report["precision_ratios"].items():
        lines.append(f"  {key}: {v}")
    for fl in report["flags"]:
        lines.append(f"  FLAG {fl['series']}: {fl['flag']}")
    return "\n".join(lines) + "\n"


# -- LUT-size case study -------------------------------------------------------

# reference K=6 kLB utilizations for the dense 8-bit study points, measured by
# an external CAD flow on the same kernel sizes; informational band only
REFERENCE_KLBS_K6_8BIT_DENSE = {
    "gemmt-RP-S": 1.06,
    "conv1d-PW-S": 12.8,
    "conv2d-PW-S": 19.2,
}


def case_study(kernels: tuple[str, ...] = STUDY_KERNELS,
               lut_sizes: tuple[int, ...] = (3, 4, 5, 6),
               sparsities: tuple[float, ...] = (0.0, 0.5, 0.9),
               precisions: tuple[int, ...] = (8, 4),
               seeds: int = 1,
               out_dir: str | None = None) -> dict:
    """Sweep LUT size over the study kernels; returns rows, normalized ADP, notes.

    One graph is built per (kernel, sparsity, bits, seed) and mapped onto each
    architecture, so the area differences isolate the logic-block geometry.
    """
    rows = []
    adp_rows = []
    notes = []
    for preset in kernels:
        for b in precisions:
            for s in sparsities:
                per_k: dict[int, list] = {k: [] for k in lut_sizes}
                for seed in range(seeds):
                    cfg = preset_config(preset, bits=b)
                    weights = generate_weights(cfg.weight_shape(), s, b, seed=seed)
                    graph = build_kernel(cfg, weights)
                    for k in lut_sizes:
                        per_k[k].append(estimate(graph, get_arch(f"K{k}")))
                reports = {}
                for k in lut_sizes:
                    rs = per_k[k]
                    mean = lambda f: sum(f(r) for r in rs) / len(rs)
                    row = {
                        "preset": preset, "bits": b, "sparsity": s, "lut_size": k,
                        "klbs": round(mean(lambda r: r.lb_count) / 1000.0, 4),
                        "area_mm2": round(mean(lambda r: r.logic_area_um2) / 1e6, 6),
                        "crit_path_ns": round(mean(lambda r: r.crit_path_ns), 4),
                        "adp": round(mean(lambda r: r.adp_um2_ns), 2),
                    }
                    rows.append(row)
                    reports[k] = rs[0]
                norm = adp_table(reports) if 6 in reports else {}
                for k in lut_sizes:
                    adp_rows.append({"preset": preset, "bits": b, "sparsity": s,
                                     "lut_size": k, "norm_adp": round(norm.get(k, 1.0), 4)})
                if b == 8 and s == 0.0 and preset in REFERENCE_KLBS_K6_8BIT_DENSE and 6 in reports:
                    model = reports[6].lb_count / 1000.0
                    ref = REFERENCE_KLBS_K6_8BIT_DENSE[preset]
                    notes.append(
                        f"{preset} K=6 8-bit dense: model {model:.2f} kLBs vs "
                        f"reference {ref:.2f} kLBs ({model / ref:.2f}x; rule-based "
                        f"mapping, informational only)")
    result = {"rows": rows, "adp": adp_rows, "notes": notes,
              "table": _case_table(rows, kernels, lut_sizes, sparsities, precisions)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "case_study.csv", rows,
                   ["preset", "bits", "sparsity", "lut_size", "klbs", "area_mm2",
                    "crit_path_ns", "adp"])
        _write_csv(out / "adp.csv", adp_rows,
                   ["preset", "bits", "sparsity", "lut_size", "norm_adp"])
        (out / "case_study.txt").write_text(result["table"] + "\n" +
                                            "\n".join(notes) + "\n")
    return result


def _case_table(rows, kernels, lut_sizes, sparsities, precisions) -> str:
    """Sparsity blocks x K rows x (kernel, precision) column groups."""
    index = {(r["preset"], r["bits"], r["sparsity"], r["lut_size"]): r for r in rows}
    groups = [(p, b) for b in precisions for p in kernels]
    head = ["sparsity", "K"] + [f"{p}@{b}b kLBs|mm2|ns" for p, b in groups]
    lines = ["  ".join(f"{h:>26s}" if i > 1 else f"{h:>8s}" for i, h in enumerate(head))]
    for s in sparsities:
        for k in lut_sizes:
            cells = [f"{s:>8.1f}", f"{k:>8d}"]
            for p, b in groups:
                r = index[(p, b, s, k)]
                cells.append(f"{r['klbs']:>8.2f}|{r['area_mm2']:>8.3f}|{r['crit_path_ns']:>7.3f}")
            lines.append("  ".join(cells))
    return "\n".join(lines)
