"""Campaign metrics: success/adversarial rates, edit-distance statistics,
hydropathy, a manifold-distance plausibility proxy, edit-distance slices,
timing profiles, and rediscovery checks."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import numpy as np

from ._validation import check_embedding
from .counterfactual import CounterfactualResult, hamming
from .world import Codebook, LabeledDataset, nearest_codeword_distances

PHASE_KEYS = ("gradient", "projection", "reencode")


@lru_cache(maxsize=1)
def hydropathy_table() -> dict:
    """Per-residue hydropathy values, bundled as package data."""
    with resources.files("latentcf.data").joinpath("kyte_doolittle.json").open() as fh:
        return json.load(fh)


def gravy(seq: str) -> float:
    """Grand average of hydropathy: mean per-residue hydropathy value."""
    table = hydropathy_table()
    try:
        return float(np.mean([table[c] for c in seq]))
    except KeyError as err:
        raise ValueError(f"unknown residue {err.args[0]!r}") from None


def manifold_distance(z, codebook: Codebook) -> float:
    """Mean per-row distance to the nearest codeword; 0 iff on the codebook."""
    z = check_embedding(z, n_cols=codebook.dim)
    return float(np.mean(nearest_codeword_distances(z, codebook)))


def campaign_metrics(results: list) -> dict:
    """Aggregate one campaign's results.

    Success rate is over all runs; the adversarial rate is the fraction of
    confidence-qualifying runs whose sequence did not change; edit-distance
    statistics cover successful runs only.
    """
    if not results:
        raise ValueError("no results to aggregate")
    n = len(results)
    n_success = sum(r.success for r in results)
    n_adv = sum(r.adversarial for r in results)
    qualifying = n_success + n_adv
    edits = [r.edit_distance for r in results if r.success]
    out = {
        "n": n,
        "success_rate": n_success / n,
        "adversarial_rate": (n_adv / qualifying) if qualifying else 0.0,
        "qualifying_rate": qualifying / n,
        "mean_duration": float(np.mean([r.duration for r in results])),
    }
    if edits:
        out["edit_distance_mean"] = float(np.mean(edits))
        out["edit_distance_std"] = float(np.std(edits))
    else:
        out["edit_distance_mean"] = None
        out["edit_distance_std"] = None
    return out


def merge_seed_metrics(per_seed: list) -> dict:
    """Mean and std across per-seed campaign aggregates."""
    if not per_seed:
        raise ValueError("no campaigns to merge")

    def agg(key):
        vals = [m[key] for m in per_seed if m[key] is not None]
        if not vals:
            return None, None
        return float(np.mean(vals)), float(np.std(vals))

    merged = {"n_seeds": len(per_seed), "n_total": sum(m["n"] for m in per_seed)}
    for key in ("success_rate", "adversarial_rate", "qualifying_rate", "edit_distance_mean"):
        mean, std = agg(key)
        merged[f"{key}_mean"] = mean
        merged[f"{key}_std"] = std
    return merged


def slice_by_edit_distance(results: list, d: int, codebook: Codebook | None = None) -> dict:
    """Per-method property table over successful results with exactly d edits."""
    if d < 1:
        raise ValueError("d must be >= 1")
    out = {}
    for r in results:
        if not r.success or r.edit_distance != d:
            continue
        row = out.setdefault(r.method, {"n": 0, "gravy": [], "manifold_distance": []})
        row["n"] += 1
        row["gravy"].append(gravy(r.sequence))
        if codebook is not None:
            row["manifold_distance"].append(manifold_distance(r.final_embedding, codebook))
    for row in out.values():
        row["gravy_mean"] = float(np.mean(row.pop("gravy"))) if row["n"] else None
        md = row.pop("manifold_distance")
        row["manifold_distance_mean"] = float(np.mean(md)) if md else None
    return out


def timing_profile(results: list) -> dict:
    """Per-method mean duration and per-phase time fractions.

    Phases not explicitly timed are reported as "other" so the fractions
    always sum to one; all-zero durations report zero fractions.
    """
    out = {}
    by_method = {}
    for r in results:
        by_method.setdefault(r.method, []).append(r)
    for method, rs in by_method.items():
        total = float(np.sum([r.duration for r in rs]))
        phase_totals = {k: float(np.sum([r.phase_seconds.get(k, 0.0) for r in rs])) for k in PHASE_KEYS}
        other = max(total - sum(phase_totals.values()), 0.0)
        fractions = {}
        if total > 0:
            fractions = {k: v / total for k, v in phase_totals.items()}
            fractions["other"] = other / total
        else:
            fractions = {k: 0.0 for k in PHASE_KEYS}
            fractions["other"] = 0.0
        out[method] = {
            "mean_duration": total / len(rs) if rs else 0.0,
            "fractions": fractions,
        }
    return out


def rediscovery_check(results: list, dataset: LabeledDataset, target_label: int = 1) -> list:
    """Successful counterfactuals whose sequence exists in the dataset with
    the target label, tagged by the split it came from."""
    index = {}
    for item in dataset.items:
        if item.label == target_label:
            index.setdefault(item.sequence, item.split)
    matches = []
    for r in results:
        if r.success and r.sequence in index:
            matches.append({
                "method": r.method,
                "sample_id": r.sample_id,
                "sequence": r.sequence,
                "split": index[r.sequence],
            })
    return matches


def mutation_frequencies(results: list, length: int) -> dict:
    """Per-method, per-position mutation counts over successful runs."""
    out = {}
    for r in results:
        if not r.success:
            continue
        counts = out.setdefault(r.method, np.zeros(length, dtype=int))
        for pos in r.mutated_positions:
            counts[pos] += 1
    return out


__all__ = [
    "CounterfactualResult",
    "hamming",
    "gravy",
    "manifold_distance",
    "campaign_metrics",
    "merge_seed_metrics",
    "slice_by_edit_distance",
    "timing_profile",
    "rediscovery_check",
    "mutation_frequencies",
]
