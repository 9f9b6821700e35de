import time

import numpy as np
import pytest

from latentcf import classifier as lc
from latentcf import mlp
from latentcf import world as lw


@pytest.fixture(scope="session")
def default_world():
    return lw.WorldConfig()


@pytest.fixture(scope="session")
def default_codebook(default_world):
    return default_world.codebook()


@pytest.fixture(scope="session")
def campaign_state(default_world):
    """Datasets and trained predictor pairs for seeds 0-2 (shared, expensive)."""
    state = {"datasets": {}, "predictors": {}, "train_seconds": 0.0}
    for seed in (0, 1, 2):
        state["datasets"][seed] = lw.make_dataset(default_world, 600, seed=seed)
    t0 = time.time()
    for seed in (0, 1, 2):
        ds = state["datasets"][seed]
        smoothed = lc.train_predictor(ds, smoothed=True, seed=seed)
        raw = lc.train_predictor(ds, smoothed=False, seed=seed)
        state["predictors"][seed] = {"raw": raw, "smoothed": smoothed}
    state["train_seconds"] = time.time() - t0
    return state


def make_linear_classifier(weights, bias: float = 0.0) -> lc.EmbeddingClassifier:
    """Hand-built single-layer predictor with logit = <weights, z> + bias."""
    weights = np.asarray(weights, dtype=np.float64)
    length, dim = weights.shape
    clf = lc.EmbeddingClassifier(hidden_sizes=(), spectral_norm=False, softplus=False)
    params = mlp.init_mlp([length * dim, 1], rng=0, activation="relu")
    params.layers[0].weight = weights.reshape(1, -1).copy()
    params.layers[0].bias = np.array([float(bias)])
    clf.params_ = params
    clf.n_positions_ = length
    clf.n_dims_ = dim
    clf.classes_ = np.array([0, 1])
    clf.report_ = {}
    return clf
