"""Acceptance suite: every release criterion with its stated tolerance.

Each test prints one PASS line when its criterion holds.  The expensive
shared state (datasets and trained predictor pairs for three seeds, method
campaigns over the eligible test samples) is built once per session.
"""

import itertools
import time

import numpy as np
import pytest

from latentcf import classifier as lc
from latentcf import cli
from latentcf import mlp
from latentcf import world as lw
from latentcf.baselines import GeneticAlgorithmBaseline, GradientDescentBaseline, HillClimbBaseline
from latentcf.campaign import (
    eligible_test_samples,
    run_ablation,
    run_method_over_samples,
)
from latentcf.config import CampaignConfig
from latentcf.counterfactual import ManifoldCounterfactual, hamming
from latentcf.metrics import campaign_metrics, merge_seed_metrics
from latentcf.projection import Projector, denoise_estimate, forward_noise
from latentcf.reports import summary_metric_values
from latentcf.world import build_codebook, decode, encode, otsu_threshold

SEEDS = (0, 1, 2)


@pytest.fixture(scope="session")
def campaign_runs(campaign_state):
    """All four methods over the eligible test samples of every seed."""
    cfg = CampaignConfig()
    runs = {name: {} for name in ("manifold", "gd", "hillclimb", "ga")}
    timings = {}
    for name in runs:
        t0 = time.time()
        for seed in SEEDS:
            ds = campaign_state["datasets"][seed]
            preds = campaign_state["predictors"][seed]
            samples = eligible_test_samples(ds, preds)
            assert samples, f"no eligible samples for seed {seed}"
            if name == "manifold":
                method = ManifoldCounterfactual().fit(preds["smoothed"], ds.codebook)
            elif name == "gd":
                method = GradientDescentBaseline().fit(preds["raw"], ds.codebook)
            elif name == "hillclimb":
                method = HillClimbBaseline().fit(preds["smoothed"], ds.codebook)
            else:
                method = GeneticAlgorithmBaseline().fit(preds["smoothed"], ds.codebook)
            runs[name][seed] = run_method_over_samples(method, samples, seed)
        timings[name] = time.time() - t0
    return {"runs": runs, "timings": timings, "config": cfg}


def merged_metrics(per_seed_results):
    return merge_seed_metrics([campaign_metrics(rs) for rs in per_seed_results.values()])


def pooled_successful_edits(per_seed_results):
    edits = [r.edit_distance for rs in per_seed_results.values() for r in rs if r.success]
    return float(np.mean(edits)) if edits else None


def test_criterion_01_gradient_exactness():
    """Reverse-mode input and parameter gradients match finite differences."""
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst_in, worst_par = 0.0, 0.0
    for trial in range(100):
        activation = "softplus" if trial % 2 == 0 else "relu"
        spectral = trial % 3 == 0
        params = mlp.init_mlp([6, 5, 4, 1], rng=rng, activation=activation,
                              spectral_norm=spectral)
        z = rng.normal(size=(3, 2))
        g = mlp.input_gradient(params, z)
        h = 1e-5
        fd = np.zeros_like(z)
        for i in range(3):
            for j in range(2):
                zp = z.copy(); zp[i, j] += h
                zm = z.copy(); zm[i, j] -= h
                fd[i, j] = (mlp.mlp_forward(params, zp) - mlp.mlp_forward(params, zm)) / (2 * h)
        denom = max(np.max(np.abs(fd)), 1e-12)
        worst_in = max(worst_in, np.max(np.abs(g - fd)) / denom)

        X = rng.normal(size=(2, 6))
        y = rng.integers(0, 2, size=2).astype(float)
        _, grads, _ = mlp.bce_loss_and_grads(params, X, y)

        def loss():
            return float(np.mean(mlp.bce_with_logits(mlp.batch_logits(params, X), y)))

        for li, layer in enumerate(params.layers):
            gw, gb = grads[li]
            for idx in [(0, 0), (gw.shape[0] - 1, gw.shape[1] - 1)]:
                orig = layer.weight[idx]
                layer.weight[idx] = orig + 1e-6
                fp = loss()
                layer.weight[idx] = orig - 1e-6
                fm = loss()
                layer.weight[idx] = orig
                fd_val = (fp - fm) / 2e-6
                denom = max(abs(fd_val), np.max(np.abs(gw)), 1e-10)
                worst_par = max(worst_par, abs(gw[idx] - fd_val) / denom)
    elapsed = time.time() - t0
    assert worst_in < 1e-5
    assert worst_par < 1e-5
    assert elapsed < 10.0
    print(f"\n[criterion 01] PASS gradient exactness: input rel err {worst_in:.2e}, "
          f"param rel err {worst_par:.2e}, {elapsed:.1f}s")


def test_criterion_02_spectral_normalization():
    """Trained spectral layers verify at operator norm <= 1.01 and the power
    iteration agrees with a dense SVD oracle on small layers."""
    world = lw.WorldConfig(
        length=6, dim=8,
        motif=[(1, "C", 1.0), (4, "D", 0.6), (0, "A", 0.3)],
        epistatic_pairs=[], label_noise=0.0, jitter_sigma=0.05,
        min_separation=0.5, codeword_scale=0.5, axis_positions=None, seed=5,
    )
    ds = lw.make_dataset(world, 240, seed=1)
    clf = lc.train_predictor(
        ds, smoothed=True,
        overrides={"hidden_sizes": (48, 24), "max_epochs": 40, "patience": 40},
        seed=0,
    )
    for layer in clf.params_.layers:
        assert max(layer.weight.shape) <= 64
        sigma_pi, _ = mlp.spectral_norm_estimate(layer.weight, 50, layer.u)
        sigma_svd = float(np.linalg.svd(layer.weight, compute_uv=False)[0])
        assert sigma_pi <= 1.01
        assert abs(sigma_pi - sigma_svd) < 1e-4
        assert sigma_svd <= 1.01
    print("\n[criterion 02] PASS spectral normalization: all layers <= 1.01, "
          "power iteration matches SVD within 1e-4")


def test_criterion_03_hutchinson_estimator():
    """Probe estimate within 10% at 1000 probes; 5-probe batches unbiased."""
    rng = np.random.default_rng(303)
    params = mlp.init_mlp([10, 1], rng=rng)
    w = params.layers[0].weight[0]
    exact = float(w @ w)
    z = rng.normal(size=(5, 2))
    est = mlp.hutchinson_frob_sq(params, z, 1000, np.random.default_rng(7))
    assert abs(est - exact) / exact < 0.10

    samples = np.array([mlp.hutchinson_frob_sq(params, z, 5, rng) for _ in range(10000)])
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    assert abs(samples.mean() - exact) <= 3 * se
    print(f"\n[criterion 03] PASS Hutchinson: 1000-probe rel err "
          f"{abs(est - exact) / exact:.3f}, 10k-rep bias {abs(samples.mean() - exact):.4f} "
          f"<= 3se ({3 * se:.4f})")


def test_criterion_04_smoothing_trend(campaign_state):
    """Smoothing lowers the average gradient norm without losing AUROC."""
    ratios, auroc_drops = [], []
    for seed in SEEDS:
        raw = campaign_state["predictors"][seed]["raw"]
        smoothed = campaign_state["predictors"][seed]["smoothed"]
        ratios.append(raw.report_["avg_gradient_norm"] / smoothed.report_["avg_gradient_norm"])
        auroc_drops.append(raw.report_["test_auroc"] - smoothed.report_["test_auroc"])
    assert np.mean(ratios) >= 1.2
    assert all(drop <= 0.02 for drop in auroc_drops)
    assert campaign_state["train_seconds"] < 120.0
    print(f"\n[criterion 04] PASS smoothing trend: norm ratio {np.mean(ratios):.1f}x, "
          f"max AUROC drop {max(auroc_drops):.3f}, training {campaign_state['train_seconds']:.0f}s")


def test_criterion_05_gradient_descent_is_adversarial(campaign_runs):
    """The unconstrained baseline crosses the threshold without real edits."""
    m = merged_metrics(campaign_runs["runs"]["gd"])
    assert m["qualifying_rate_mean"] >= 0.95
    assert m["adversarial_rate_mean"] >= 0.8
    assert campaign_runs["timings"]["gd"] < 120.0
    print(f"\n[criterion 05] PASS gd adversarial: qualify {m['qualifying_rate_mean']:.2f}, "
          f"adversarial {m['adversarial_rate_mean']:.2f}, {campaign_runs['timings']['gd']:.0f}s")


def test_criterion_06_validity_and_sparsity(campaign_runs):
    """Manifold method: high success, low adversarial rate, sparsest edits."""
    runs = campaign_runs["runs"]
    m = merged_metrics(runs["manifold"])
    edits = pooled_successful_edits(runs["manifold"])
    edits_hc = pooled_successful_edits(runs["hillclimb"])
    edits_ga = pooled_successful_edits(runs["ga"])
    assert m["success_rate_mean"] >= 0.9
    assert m["adversarial_rate_mean"] <= 0.1
    assert edits is not None and edits <= 5.0
    assert edits_ga is not None and edits < edits_ga
    assert edits_hc is None or edits < edits_hc
    elapsed = campaign_runs["timings"]["manifold"]
    assert elapsed < 300.0
    print(f"\n[criterion 06] PASS validity/sparsity: success {m['success_rate_mean']:.2f}, "
          f"adversarial {m['adversarial_rate_mean']:.2f}, edits {edits:.2f} "
          f"(hillclimb {edits_hc}, ga {edits_ga:.2f}), {elapsed:.0f}s")


def test_criterion_07_hard_reset_invariant(campaign_state):
    """Before projection, unmasked rows equal the original bit-exactly."""
    violations = 0
    checks = 0

    def callback(info):
        nonlocal violations, checks
        mask = info["mask"]
        pre = info["pre_projection"]
        z_orig = info["z_orig"]
        checks += 1
        if not np.array_equal(pre[~mask], z_orig[~mask]):
            violations += 1

    ds = campaign_state["datasets"][0]
    preds = campaign_state["predictors"][0]
    samples = eligible_test_samples(ds, preds)
    method = ManifoldCounterfactual().fit(preds["smoothed"], ds.codebook)
    run_method_over_samples(method, samples, 0, step_callback=callback)
    assert checks > 0
    assert violations == 0
    print(f"\n[criterion 07] PASS hard reset: {checks} instrumented steps, 0 violations")


def test_criterion_08_sparsity_ceiling_alpha_zero(campaign_state):
    """With projection off, successful runs edit at most k positions."""
    ds = campaign_state["datasets"][0]
    clf = campaign_state["predictors"][0]["smoothed"]
    cb = ds.codebook
    world = ds.world
    rng = np.random.default_rng(808)
    samples = []
    while len(samples) < 200:
        seq = "".join(cb.alphabet[i] for i in rng.integers(0, len(cb.alphabet), size=world.length))
        z = encode(seq, cb, world.jitter_sigma, rng)
        if clf.logit(z) < 0:
            samples.append((len(samples), z))
    method = ManifoldCounterfactual(alpha=0.0).fit(clf, cb)
    results = run_method_over_samples(method, samples, seed=0)
    n_success = sum(r.success for r in results)
    for r in results:
        if r.success:
            assert r.edit_distance <= method.k
    print(f"\n[criterion 08] PASS sparsity ceiling: {len(results)} runs, "
          f"{n_success} successes, all within k={method.k} edits")


def test_criterion_09_round_trip_and_locality(campaign_state):
    """Decode(encode) identity at zero jitter and row-local decoding."""
    cb_small = build_codebook(4, 6, seed=9, min_separation=1.0, axis_positions=None)
    for tup in itertools.product(cb_small.alphabet, repeat=4):
        seq = "".join(tup)
        assert decode(encode(seq, cb_small), cb_small) == seq

    ds = campaign_state["datasets"][0]
    cb = ds.codebook
    world = ds.world
    rng = np.random.default_rng(909)
    for _ in range(10000):
        seq = "".join(cb.alphabet[i] for i in rng.integers(0, 20, size=world.length))
        assert decode(encode(seq, cb), cb) == seq

    seq = "".join(cb.alphabet[i] for i in rng.integers(0, 20, size=world.length))
    z = encode(seq, cb)
    for _ in range(500):
        row = int(rng.integers(0, world.length))
        z2 = z.copy()
        z2[row] += rng.normal(scale=rng.uniform(0.01, 30.0), size=world.dim)
        decoded = decode(z2, cb)
        diffs = [i for i in range(world.length) if decoded[i] != seq[i]]
        assert diffs in ([], [row])
    print("\n[criterion 09] PASS round-trip (exhaustive small + 10k random) and locality")


def test_criterion_10_otsu_oracle_equivalence():
    """Threshold equals brute-force maximization over all bin edges."""
    from test_world import otsu_brute_force

    rng = np.random.default_rng(1010)
    for _ in range(100):
        n0 = int(rng.integers(4, 60))
        n1 = int(rng.integers(4, 60))
        values = np.concatenate([
            rng.normal(0.0, rng.uniform(0.3, 1.5), size=n0),
            rng.normal(rng.uniform(1.0, 6.0), rng.uniform(0.3, 1.5), size=n1),
        ])
        assert otsu_threshold(values) == otsu_brute_force(values)
    print("\n[criterion 10] PASS Otsu oracle equivalence on 100 random value sets")


def test_criterion_11_baseline_contracts(campaign_runs):
    """Hill-climb monotonicity, GA elitism, discrete non-adversariality, and
    the GA > hill-climb success ordering."""
    runs = campaign_runs["runs"]
    for rs in runs["hillclimb"].values():
        for r in rs:
            trace = r.confidence_trace
            accepted = [trace[i] for i in range(1, len(trace)) if trace[i] != trace[i - 1]]
            assert all(b > a for a, b in zip([trace[0]] + accepted, accepted))
    for rs in runs["ga"].values():
        for r in rs:
            ft = r.diagnostics["best_fitness_trace"]
            assert all(b >= a - 1e-12 for a, b in zip(ft, ft[1:]))
    for name in ("hillclimb", "ga"):
        for rs in runs[name].values():
            for r in rs:
                assert r.adversarial is False
                if r.success:
                    assert r.edit_distance >= 1
    ga_rate = merged_metrics(runs["ga"])["success_rate_mean"]
    hc_rate = merged_metrics(runs["hillclimb"])["success_rate_mean"]
    assert ga_rate > hc_rate
    print(f"\n[criterion 11] PASS baseline contracts: ga success {ga_rate:.2f} > "
          f"hillclimb {hc_rate:.2f}, adversarial 0 for both")


def test_criterion_12_ablation_all_off_equals_gd(campaign_state, tmp_path):
    """The smoothing-off/projection-off/full-mask cell reproduces the direct
    gradient-descent campaign byte-exactly."""
    cfg = CampaignConfig()
    cfg.campaign.seeds = (0,)
    cfg.campaign.ablation_k = (5, cfg.world.length)
    datasets = {0: campaign_state["datasets"][0]}
    predictors = {0: campaign_state["predictors"][0]}
    table = run_ablation(cfg, tmp_path, datasets=datasets, predictors=predictors)
    all_off = next(
        row for row in table
        if not row["smoothing"] and not row["projection"] and row["k"] >= cfg.world.length
    )
    ds = datasets[0]
    preds = predictors[0]
    samples = eligible_test_samples(ds, preds)
    gd = GradientDescentBaseline().fit(preds["raw"], ds.codebook)
    direct = run_method_over_samples(gd, samples, 0)
    direct_merged = merge_seed_metrics([campaign_metrics(direct)])
    assert summary_metric_values(all_off["metrics"]) == summary_metric_values(direct_merged)
    print("\n[criterion 12] PASS ablation all-off cell == direct gd campaign (byte-exact row)")


def test_criterion_13_pipeline_determinism(tmp_path):
    """gen -> train -> run twice, different worker counts, identical summary."""
    config = tmp_path / "micro.ini"
    config.write_text(
        "[dataset]\nn = 260\n"
        "[train]\nhidden_sizes = 48,24\nmax_epochs = 120\npatience = 120\n"
        "[manifold]\nmax_steps = 15\n"
        "[gd]\nsteps = 15\n"
        "[hillclimb]\nmax_steps = 15\n"
        "[ga]\npopulation = 8\ngenerations = 3\nelite_fraction = 0.25\n"
        "[campaign]\nseeds = 0\n"
    )
    summaries = []
    for run_idx, jobs in enumerate((1, 3)):
        out = tmp_path / f"run{run_idx}"
        for command in ("gen-data", "train"):
            assert cli.main(["--", command][1:] + ["--config", str(config), "--out", str(out)]) == 0
        assert cli.main(["run", "--config", str(config), "--out", str(out),
                         "--jobs", str(jobs)]) == 0
        summaries.append((out / "summary.csv").read_bytes())
        # manifests must also be reproducible
        if run_idx == 1:
            a = (tmp_path / "run0" / "data" / "seed0" / "records.csv").read_bytes()
            b = (out / "data" / "seed0" / "records.csv").read_bytes()
            assert a == b
    assert summaries[0] == summaries[1]
    print("\n[criterion 13] PASS determinism: summary.csv byte-identical across reruns "
          "and worker counts")


def test_criterion_14_projection_behavior(campaign_state):
    """alpha=0 identity, alpha=1 pure denoiser, and manifold attraction."""
    cb = campaign_state["datasets"][0].codebook
    rng_z = np.random.default_rng(1414)
    z = rng_z.normal(size=(5, cb.dim))

    proj0 = Projector(cb, alpha=0.0)
    rng = np.random.default_rng(1)
    state = rng.bit_generator.state
    out0 = proj0.project(z, rng)
    assert np.array_equal(out0, z)
    assert rng.bit_generator.state == state

    proj1 = Projector(cb, alpha=1.0, prior_sigma=0.8, t_diff=100)
    out1 = proj1.project(z, np.random.default_rng(42))
    z_t = forward_noise(z, 100, proj1.schedule, np.random.default_rng(42))
    expected = denoise_estimate(z_t, 100, cb, 0.8, proj1.schedule)
    assert np.array_equal(out1, expected)

    proj = Projector(cb, alpha=0.3, prior_sigma=0.8)
    rng = np.random.default_rng(2)
    deltas = []
    for _ in range(1000):
        base = cb.vectors[rng.integers(0, len(cb.alphabet))]
        direction = rng.normal(size=cb.dim)
        direction /= np.linalg.norm(direction)
        z_off = (base + (3.0 * proj.prior_sigma + 0.5) * direction)[None, :]
        before = lw.nearest_codeword_distances(z_off, cb)[0]
        after = lw.nearest_codeword_distances(proj.project(z_off, rng), cb)[0]
        deltas.append(after - before)
    assert np.mean(deltas) < 0.0
    print(f"\n[criterion 14] PASS projection: alpha endpoints bit-exact, attraction "
          f"mean delta {np.mean(deltas):+.3f} over 1000 trials")
