"""CSV emission for campaigns.  Column names are part of the public
interface and stay stable; summary-style rows use fixed six-decimal
formatting so identical runs produce byte-identical files."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .metrics import (
    PHASE_KEYS,
    campaign_metrics,
    merge_seed_metrics,
    mutation_frequencies,
    timing_profile,
)

CAMPAIGN_COLUMNS = [
    "seed",
    "method",
    "sample_id",
    "success",
    "adversarial",
    "steps",
    "edit_distance",
    "final_confidence",
    "best_confidence",
    "duration_s",
    "gravy_orig",
    "gravy_cf",
    "manifold_distance",
    "mutated_positions",
    "t_gradient",
    "t_projection",
    "t_reencode",
]

SUMMARY_METRIC_COLUMNS = [
    "n_seeds",
    "n_total",
    "success_rate_mean",
    "success_rate_std",
    "adversarial_rate_mean",
    "adversarial_rate_std",
    "qualifying_rate_mean",
    "qualifying_rate_std",
    "edit_distance_mean",
    "edit_distance_std",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_campaign_csv(path, rows: list) -> None:
    """One row per (seed, method, sample)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CAMPAIGN_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in CAMPAIGN_COLUMNS])


def read_campaign_csv(path) -> list:
    rows = []
    with Path(path).open() as fh:
        for record in csv.DictReader(fh):
            record["seed"] = int(record["seed"])
            record["sample_id"] = int(record["sample_id"])
            record["success"] = record["success"] == "1"
            record["adversarial"] = record["adversarial"] == "1"
            record["steps"] = int(record["steps"])
            record["edit_distance"] = int(record["edit_distance"])
            for key in ("final_confidence", "best_confidence", "duration_s", "gravy_orig",
                        "gravy_cf", "manifold_distance", "t_gradient", "t_projection",
                        "t_reencode"):
                record[key] = float(record[key]) if record[key] else None
            rows.append(record)
    return rows


def summary_metric_values(merged: dict) -> list:
    return [_fmt(merged.get(c)) for c in SUMMARY_METRIC_COLUMNS]


def write_summary_csv(path, per_method_seed_results: dict) -> None:
    """One aggregate row per method: rates and edit distances, mean +/- std
    across seeds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method"] + SUMMARY_METRIC_COLUMNS)
        for method in sorted(per_method_seed_results):
            seed_results = per_method_seed_results[method]
            merged = merge_seed_metrics(
                [campaign_metrics(rs) for rs in seed_results.values() if rs]
            )
            writer.writerow([method] + summary_metric_values(merged))


def write_timing_csv(path, results: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    profile = timing_profile(results)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "mean_duration_s"] + [f"frac_{k}" for k in PHASE_KEYS] + ["frac_other"])
        for method in sorted(profile):
            row = profile[method]
            writer.writerow(
                [method, _fmt(row["mean_duration"])]
                + [_fmt(row["fractions"][k]) for k in PHASE_KEYS]
                + [_fmt(row["fractions"]["other"])]
            )


def write_mutfreq_csv(path, results: list, length: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    freqs = mutation_frequencies(results, length)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "position", "count", "frequency"])
        for method in sorted(freqs):
            counts = freqs[method]
            n_success = sum(1 for r in results if r.method == method and r.success)
            for pos, count in enumerate(counts):
                freq = count / n_success if n_success else 0.0
                writer.writerow([method, pos, int(count), _fmt(float(freq))])


def write_slice_csvs(out_dir, results: list, codebook) -> list:
    """slices_d<k>.csv for every successful edit distance observed."""
    from .metrics import slice_by_edit_distance

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    distances = sorted({r.edit_distance for r in results if r.success})
    written = []
    for d in distances:
        table = slice_by_edit_distance(results, d, codebook)
        path = out_dir / f"slices_d{d}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "n", "gravy_mean", "manifold_distance_mean"])
            for method in sorted(table):
                row = table[method]
                writer.writerow(
                    [method, row["n"], _fmt(row["gravy_mean"]), _fmt(row["manifold_distance_mean"])]
                )
        written.append(path)
    return written


def write_rediscovery_csv(path, matches: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "seed", "sample_id", "sequence", "split"])
        for m in sorted(matches, key=lambda m: (m["method"], m.get("seed", -1), m["sample_id"])):
            writer.writerow([m["method"], m.get("seed", ""), m["sample_id"], m["sequence"], m["split"]])


def write_sequences_txt(path, results: list) -> None:
    """Plain-text sidecar: one line per run with original and final sequence."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# seed method sample_id original counterfactual"]
    for r in results:
        lines.append(f"{r.seed} {r.method} {r.sample_id} {r.original_sequence} {r.sequence}")
    path.write_text("\n".join(lines) + "\n")


def write_train_report_csv(path, rows: list) -> None:
    """Per-seed AUROC and gradient norm before/after smoothing, plus a mean row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["seed", "auroc_unsmoothed", "auroc_smoothed", "grad_norm_unsmoothed", "grad_norm_smoothed"]
        )
        for row in rows:
            writer.writerow(
                [row["seed"], _fmt(row["auroc_unsmoothed"]), _fmt(row["auroc_smoothed"]),
                 _fmt(row["grad_norm_unsmoothed"]), _fmt(row["grad_norm_smoothed"])]
            )
        if rows:
            writer.writerow(
                ["mean"]
                + [
                    _fmt(float(np.mean([row[k] for row in rows])))
                    for k in ("auroc_unsmoothed", "auroc_smoothed", "grad_norm_unsmoothed",
                              "grad_norm_smoothed")
                ]
            )
