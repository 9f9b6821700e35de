"""Sparse counterfactual edits for classifiers over position-wise latent spaces.

The package bundles a synthetic codebook latent world with exact decoding,
a smoothed feed-forward property classifier, an analytic diffusion-style
manifold projector, a masked manifold-constrained counterfactual optimizer,
three baselines, and a campaign CLI with CSV reports.
"""

from .baselines import (
    BaseCounterfactualMethod,
    GeneticAlgorithmBaseline,
    GradientDescentBaseline,
    HillClimbBaseline,
    ga_fitness,
)
from .classifier import (
    EmbeddingClassifier,
    TrainingError,
    auroc,
    fgsm_perturb,
    load_predictor,
    save_predictor,
    train_predictor,
)
from .config import CampaignConfig, ConfigError, load_config
from .counterfactual import (
    CounterfactualResult,
    ManifoldCounterfactual,
    counterfactual_loss,
    hamming,
    margin_loss,
    topk_mask,
)
from .metrics import (
    campaign_metrics,
    gravy,
    manifold_distance,
    rediscovery_check,
    slice_by_edit_distance,
    timing_profile,
)
from .projection import NoiseSchedule, Projector, denoise_estimate, forward_noise, project
from .world import (
    AMINO_ACIDS,
    Codebook,
    LabeledDataset,
    WorldConfig,
    build_codebook,
    decode,
    encode,
    ground_truth_score,
    load_dataset,
    make_dataset,
    otsu_threshold,
    save_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "AMINO_ACIDS",
    "BaseCounterfactualMethod",
    "CampaignConfig",
    "Codebook",
    "ConfigError",
    "CounterfactualResult",
    "EmbeddingClassifier",
    "GeneticAlgorithmBaseline",
    "GradientDescentBaseline",
    "HillClimbBaseline",
    "LabeledDataset",
    "ManifoldCounterfactual",
    "NoiseSchedule",
    "Projector",
    "TrainingError",
    "WorldConfig",
    "auroc",
    "build_codebook",
    "campaign_metrics",
    "counterfactual_loss",
    "decode",
    "denoise_estimate",
    "encode",
    "fgsm_perturb",
    "forward_noise",
    "ga_fitness",
    "gravy",
    "ground_truth_score",
    "hamming",
    "load_config",
    "load_dataset",
    "load_predictor",
    "make_dataset",
    "manifold_distance",
    "margin_loss",
    "otsu_threshold",
    "project",
    "rediscovery_check",
    "save_dataset",
    "save_predictor",
    "slice_by_edit_distance",
    "timing_profile",
    "topk_mask",
    "train_predictor",
]
