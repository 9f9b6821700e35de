"""Campaign orchestration: dataset generation, paired predictor training,
per-method counterfactual runs over the eligible test samples, ablation
grids, and report assembly.

Per-sample random streams derive from (seed, method, sample index), and all
aggregation is ordered by sample index, so results do not depend on the
worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import GeneticAlgorithmBaseline, GradientDescentBaseline, HillClimbBaseline
from .classifier import EmbeddingClassifier, load_predictor, save_predictor, train_predictor
from .config import CampaignConfig, ConfigError
from .counterfactual import ManifoldCounterfactual
from .metrics import gravy, manifold_distance, rediscovery_check
from .reports import (
    write_campaign_csv,
    write_mutfreq_csv,
    write_rediscovery_csv,
    write_sequences_txt,
    write_slice_csvs,
    write_summary_csv,
    write_timing_csv,
    write_train_report_csv,
)
from .world import LabeledDataset, load_dataset, make_dataset, save_dataset

METHOD_TAGS = {"manifold": 1, "gd": 2, "hillclimb": 3, "ga": 4}
# which predictor each method attacks: the unconstrained-gradient baseline
# runs against the unsmoothed network, everything else against the smoothed
METHOD_PREDICTOR = {"manifold": "smoothed", "gd": "raw", "hillclimb": "smoothed", "ga": "smoothed"}


def dataset_dir(out_dir, seed: int) -> Path:
    return Path(out_dir) / "data" / f"seed{seed}"


def model_prefix(out_dir, seed: int, kind: str) -> Path:
    return Path(out_dir) / "models" / f"seed{seed}" / kind


def generate_datasets(cfg: CampaignConfig, out_dir) -> dict:
    """One dataset per campaign seed, persisted under the output directory."""
    datasets = {}
    for seed in cfg.campaign.seeds:
        ds = make_dataset(cfg.world, cfg.dataset.n, seed=seed, binarize=cfg.dataset.binarize)
        save_dataset(ds, dataset_dir(out_dir, seed))
        datasets[seed] = ds
    return datasets


def load_datasets(cfg: CampaignConfig, out_dir) -> dict:
    datasets = {}
    for seed in cfg.campaign.seeds:
        ddir = dataset_dir(out_dir, seed)
        if not (ddir / "manifest.json").exists():
            raise FileNotFoundError(f"dataset missing for seed {seed}: run gen-data first")
        datasets[seed] = load_dataset(ddir)
    return datasets


def train_predictor_pair(cfg: CampaignConfig, dataset: LabeledDataset, seed: int):
    """(unsmoothed, smoothed) classifiers trained with the shared protocol."""
    base = cfg.train.overrides()
    smoothed = train_predictor(
        dataset, smoothed=True, overrides={**base, **cfg.smoothing.overrides()}, seed=seed
    )
    raw = train_predictor(dataset, smoothed=False, overrides=dict(base), seed=seed)
    return raw, smoothed


def train_all(cfg: CampaignConfig, datasets: dict, out_dir) -> tuple[dict, list]:
    """Train and checkpoint both predictors per seed; return the Table-1 rows."""
    predictors = {}
    report_rows = []
    for seed in cfg.campaign.seeds:
        raw, smoothed = train_predictor_pair(cfg, datasets[seed], seed)
        save_predictor(raw, model_prefix(out_dir, seed, "raw"))
        save_predictor(smoothed, model_prefix(out_dir, seed, "smoothed"))
        predictors[seed] = {"raw": raw, "smoothed": smoothed}
        report_rows.append(
            {
                "seed": seed,
                "auroc_unsmoothed": raw.report_["test_auroc"],
                "auroc_smoothed": smoothed.report_["test_auroc"],
                "grad_norm_unsmoothed": raw.report_["avg_gradient_norm"],
                "grad_norm_smoothed": smoothed.report_["avg_gradient_norm"],
            }
        )
    write_train_report_csv(Path(out_dir) / "train_report.csv", report_rows)
    return predictors, report_rows


def load_predictor_pair(out_dir, seed: int):
    raw_prefix = model_prefix(out_dir, seed, "raw")
    if not raw_prefix.with_suffix(".json").exists():
        raise FileNotFoundError(f"predictor checkpoints missing for seed {seed}: run train first")
    return {
        "raw": load_predictor(raw_prefix),
        "smoothed": load_predictor(model_prefix(out_dir, seed, "smoothed")),
    }


def build_method(cfg: CampaignConfig, name: str):
    if name == "manifold":
        m = cfg.manifold
        return ManifoldCounterfactual(
            k=m.k,
            lambda_dist=m.lambda_dist,
            margin=m.margin,
            alpha=m.alpha,
            t_diff=m.t_diff,
            prior_sigma=m.prior_sigma,
            step_size=m.step_size,
            max_steps=m.max_steps,
            tau=m.tau,
        )
    if name == "gd":
        g = cfg.gd
        return GradientDescentBaseline(learning_rate=g.learning_rate, steps=g.steps, tau=g.tau)
    if name == "hillclimb":
        h = cfg.hillclimb
        return HillClimbBaseline(max_steps=h.max_steps, tau=h.tau)
    if name == "ga":
        g = cfg.ga
        return GeneticAlgorithmBaseline(
            population=g.population,
            generations=g.generations,
            crossover_rate=g.crossover_rate,
            edit_penalty=g.edit_penalty,
            tau=g.tau,
            elite_fraction=g.elite_fraction,
            tournament_size=g.tournament_size,
            eval_batch=g.eval_batch,
        )
    raise ConfigError(f"unknown method {name!r}")


def eligible_test_samples(dataset: LabeledDataset, predictors: dict, source_label: int = 0):
    """Test items of the source class that every predictor classifies
    correctly, with their regenerated embeddings."""
    out = []
    for idx in dataset.indices("test"):
        item = dataset.items[idx]
        if item.label != source_label:
            continue
        z = dataset.embedding(idx)
        if all(int(p.predict(z[None])[0]) == item.label for p in predictors.values()):
            out.append((idx, z))
    return out


def run_method_over_samples(method, samples, seed: int, jobs: int = 1, step_callback=None):
    """Explain every sample with per-sample seeded substreams; results come
    back ordered by sample index regardless of the worker pool."""
    tag = METHOD_TAGS[method.method_name]

    def one(arg):
        idx, z = arg
        rng = np.random.default_rng(np.random.SeedSequence([seed, tag, idx]))
        kwargs = {}
        if step_callback is not None:
            kwargs["step_callback"] = step_callback
        result = method.explain(z, signed_target=1, rng=rng, **kwargs)
        result.sample_id = idx
        result.seed = seed
        return result

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, samples))
    else:
        results = [one(s) for s in samples]
    return sorted(results, key=lambda r: r.sample_id)


def campaign_row(result, dataset: LabeledDataset) -> dict:
    codebook = dataset.codebook
    return {
        "seed": result.seed,
        "method": result.method,
        "sample_id": result.sample_id,
        "success": result.success,
        "adversarial": result.adversarial,
        "steps": result.steps_used,
        "edit_distance": result.edit_distance,
        "final_confidence": result.final_confidence,
        "best_confidence": result.best_confidence,
        "duration_s": result.duration,
        "gravy_orig": gravy(result.original_sequence),
        "gravy_cf": gravy(result.sequence),
        "manifold_distance": manifold_distance(result.final_embedding, codebook),
        "mutated_positions": ";".join(str(p) for p in result.mutated_positions),
        "t_gradient": result.phase_seconds.get("gradient", 0.0),
        "t_projection": result.phase_seconds.get("projection", 0.0),
        "t_reencode": result.phase_seconds.get("reencode", 0.0),
    }


def run_campaign(cfg: CampaignConfig, out_dir, datasets=None, predictors=None,
                 methods=None, jobs=None) -> dict:
    """Run every configured method over every seed and write all reports."""
    out_dir = Path(out_dir)
    methods = list(methods if methods is not None else cfg.campaign.methods)
    jobs = jobs if jobs is not None else cfg.campaign.jobs
    if datasets is None:
        datasets = load_datasets(cfg, out_dir)
    if predictors is None:
        predictors = {seed: load_predictor_pair(out_dir, seed) for seed in cfg.campaign.seeds}

    all_results = []
    per_method_seed = {name: {} for name in methods}
    rows = []
    for seed in cfg.campaign.seeds:
        dataset = datasets[seed]
        preds = predictors[seed]
        samples = eligible_test_samples(dataset, preds)
        if not samples:
            raise ValueError(
                f"seed {seed}: no correctly-classified source-class test samples; "
                "train longer or enlarge the dataset"
            )
        for name in methods:
            method = build_method(cfg, name)
            method.fit(preds[METHOD_PREDICTOR[name]], dataset.codebook)
            results = run_method_over_samples(method, samples, seed, jobs=jobs)
            per_method_seed[name][seed] = results
            all_results.extend(results)
            rows.extend(campaign_row(r, dataset) for r in results)

    write_campaign_csv(out_dir / "campaign.csv", rows)
    write_summary_csv(out_dir / "summary.csv", per_method_seed)
    write_timing_csv(out_dir / "timing.csv", all_results)
    write_mutfreq_csv(out_dir / "mutfreq.csv", all_results, cfg.world.length)
    write_slice_csvs(out_dir, all_results, datasets[cfg.campaign.seeds[0]].codebook)
    write_sequences_txt(out_dir / "sequences.txt", all_results)
    matches = []
    for seed in cfg.campaign.seeds:
        seed_results = [r for r in all_results if r.seed == seed]
        for m in rediscovery_check(seed_results, datasets[seed]):
            m["seed"] = seed
            matches.append(m)
    write_rediscovery_csv(out_dir / "rediscovery.csv", matches)
    return {"results": all_results, "per_method_seed": per_method_seed, "rows": rows}


def ablation_grid(cfg: CampaignConfig) -> list:
    """{smoothing on/off} x {projection on/off} x configured k values."""
    cells = []
    for smoothing in (True, False):
        for projection in (True, False):
            for k in cfg.campaign.ablation_k:
                cells.append({"smoothing": smoothing, "projection": projection, "k": int(k)})
    return cells


def is_all_off(cell: dict, length: int) -> bool:
    return not cell["smoothing"] and not cell["projection"] and cell["k"] >= length


def run_ablation(cfg: CampaignConfig, out_dir, datasets=None, predictors=None) -> list:
    """Summary metrics per ablation cell.

    The cell with smoothing off, projection off, and the mask covering every
    position is by definition the unconstrained gradient-descent baseline,
    so that cell dispatches to it.
    """
    from .metrics import campaign_metrics, merge_seed_metrics
    from .reports import SUMMARY_METRIC_COLUMNS, summary_metric_values

    out_dir = Path(out_dir)
    cells = ablation_grid(cfg)
    if len(cells) > cfg.campaign.max_ablation_cells:
        raise ConfigError(
            f"ablation grid has {len(cells)} cells, above the budget "
            f"{cfg.campaign.max_ablation_cells}"
        )
    if datasets is None:
        datasets = load_datasets(cfg, out_dir)
    if predictors is None:
        predictors = {seed: load_predictor_pair(out_dir, seed) for seed in cfg.campaign.seeds}

    table = []
    for cell in cells:
        per_seed = []
        for seed in cfg.campaign.seeds:
            dataset = datasets[seed]
            preds = predictors[seed]
            samples = eligible_test_samples(dataset, preds)
            if is_all_off(cell, cfg.world.length):
                method = build_method(cfg, "gd")
                method.fit(preds["raw"], dataset.codebook)
                run_name = "gd"
            else:
                m = cfg.manifold
                method = ManifoldCounterfactual(
                    k=cell["k"],
                    lambda_dist=m.lambda_dist,
                    margin=m.margin,
                    alpha=m.alpha if cell["projection"] else 0.0,
                    t_diff=m.t_diff,
                    prior_sigma=m.prior_sigma,
                    step_size=m.step_size,
                    max_steps=m.max_steps,
                    tau=m.tau,
                )
                method.fit(
                    preds["smoothed" if cell["smoothing"] else "raw"], dataset.codebook
                )
                run_name = "manifold"
            # the all-off cell reuses the gd method tag so its per-sample
            # random streams match the direct baseline campaign exactly
            results = run_method_over_samples(method, samples, seed, jobs=cfg.campaign.jobs)
            per_seed.append(campaign_metrics(results))
        merged = merge_seed_metrics(per_seed)
        table.append({**cell, "method": run_name, "metrics": merged})

    import csv

    path = out_dir / "ablation.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["smoothing", "projection", "k", "method"] + SUMMARY_METRIC_COLUMNS)
        for row in table:
            writer.writerow(
                [int(row["smoothing"]), int(row["projection"]), row["k"], row["method"]]
                + summary_metric_values(row["metrics"])
            )
    return table


def rebuild_reports(cfg: CampaignConfig, out_dir) -> None:
    """Recompute summary/timing/mutfreq/slices from campaign.csv alone."""
    import csv as _csv

    from .reports import read_campaign_csv

    out_dir = Path(out_dir)
    rows = read_campaign_csv(out_dir / "campaign.csv")
    if not rows:
        raise FileNotFoundError("campaign.csv is empty")

    # summary
    per_method_seed = {}
    for row in rows:
        per_method_seed.setdefault(row["method"], {}).setdefault(row["seed"], []).append(row)

    def metrics_from_rows(rs):
        n = len(rs)
        n_s = sum(r["success"] for r in rs)
        n_a = sum(r["adversarial"] for r in rs)
        edits = [r["edit_distance"] for r in rs if r["success"]]
        return {
            "n": n,
            "success_rate": n_s / n,
            "adversarial_rate": n_a / (n_s + n_a) if (n_s + n_a) else 0.0,
            "qualifying_rate": (n_s + n_a) / n,
            "edit_distance_mean": float(np.mean(edits)) if edits else None,
            "edit_distance_std": float(np.std(edits)) if edits else None,
            "mean_duration": float(np.mean([r["duration_s"] for r in rs])),
        }

    from .metrics import merge_seed_metrics
    from .reports import SUMMARY_METRIC_COLUMNS, summary_metric_values

    with (out_dir / "summary.csv").open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["method"] + SUMMARY_METRIC_COLUMNS)
        for method in sorted(per_method_seed):
            merged = merge_seed_metrics(
                [metrics_from_rows(rs) for rs in per_method_seed[method].values()]
            )
            writer.writerow([method] + summary_metric_values(merged))

    # timing
    with (out_dir / "timing.csv").open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["method", "mean_duration_s", "frac_gradient", "frac_projection",
                         "frac_reencode", "frac_other"])
        for method in sorted({r["method"] for r in rows}):
            rs = [r for r in rows if r["method"] == method]
            total = sum(r["duration_s"] for r in rs)
            fr = {}
            for key in ("t_gradient", "t_projection", "t_reencode"):
                fr[key] = sum(r[key] or 0.0 for r in rs) / total if total else 0.0
            other = max(1.0 - sum(fr.values()), 0.0) if total else 0.0
            writer.writerow(
                [method, f"{total / len(rs):.6f}", f"{fr['t_gradient']:.6f}",
                 f"{fr['t_projection']:.6f}", f"{fr['t_reencode']:.6f}", f"{other:.6f}"]
            )

    # mutation frequencies
    with (out_dir / "mutfreq.csv").open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["method", "position", "count", "frequency"])
        for method in sorted({r["method"] for r in rows}):
            rs = [r for r in rows if r["method"] == method and r["success"]]
            counts = np.zeros(cfg.world.length, dtype=int)
            for r in rs:
                for p in str(r["mutated_positions"]).split(";"):
                    if p:
                        counts[int(p)] += 1
            for pos, count in enumerate(counts):
                writer.writerow([method, pos, int(count),
                                 f"{(count / len(rs)) if rs else 0.0:.6f}"])
