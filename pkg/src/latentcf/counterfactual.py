"""Masked, manifold-projected counterfactual search in embedding space.

Each step: compute the counterfactual loss gradient, keep the top-k most
sensitive positions, take a gradient step there, hard-reset every other row
to the original embedding, then blend with the manifold projection.  The
run stops as soon as the target-side confidence crosses the threshold AND
the decoded sequence differs from the original.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import mlp
from ._validation import check_embedding, check_pad_mask, check_rng
from .classifier import EmbeddingClassifier
from .projection import Projector
from .world import Codebook, decode


def margin_loss(logit: float, signed_target: int, margin: float) -> float:
    """log(1 + exp(margin - signed_target*logit)), numerically stable."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    if signed_target not in (-1, 1):
        raise ValueError("signed_target must be -1 or +1")
    return float(np.logaddexp(0.0, margin - signed_target * logit))


def counterfactual_loss(
    z, z_orig, clf: EmbeddingClassifier, signed_target: int, margin: float, lambda_dist: float,
    pad_mask=None,
) -> float:
    """Margin loss plus lambda_dist times the mean squared deviation.

    The proximity term is averaged over entries so its pull is commensurate
    with the bounded per-row gradients of a smoothed classifier regardless
    of the embedding size.
    """
    z = check_embedding(z)
    z_orig = check_embedding(z_orig)
    logit = clf.logit(z, pad_mask)
    prox = float(np.mean((z - z_orig) ** 2))
    return margin_loss(logit, signed_target, margin) + lambda_dist * prox


def counterfactual_gradient(
    z, z_orig, clf: EmbeddingClassifier, signed_target: int, margin: float, lambda_dist: float,
    pad_mask=None,
):
    """(loss, dloss/dz) with the gradient assembled by the chain rule."""
    z = check_embedding(z)
    z_orig = check_embedding(z_orig)
    logit = clf.logit(z, pad_mask)
    grad_logit = clf.input_gradient(z, pad_mask)
    u = signed_target * logit
    # d/du log(1+exp(m-u)) = -sigmoid(m-u)
    dmargin = -float(mlp.sigmoid(np.array(margin - u))) * signed_target
    grad = dmargin * grad_logit + 2.0 * lambda_dist * (z - z_orig) / z.size
    loss = float(np.logaddexp(0.0, margin - u)) + lambda_dist * float(np.mean((z - z_orig) ** 2))
    return loss, grad


def position_sensitivity(grad, pad_mask=None) -> np.ndarray:
    """Per-position L2 norm of the loss gradient; padded rows get -inf."""
    grad = np.asarray(grad, dtype=np.float64)
    s = np.linalg.norm(grad, axis=1)
    mask = check_pad_mask(pad_mask, s.shape[0])
    if mask is not None:
        s = np.where(mask, s, -np.inf)
    return s


def topk_mask(sensitivity, k: int) -> np.ndarray:
    """Boolean mask of the k most sensitive positions, lowest index on ties."""
    if k < 1:
        raise ValueError("k must be >= 1")
    s = np.asarray(sensitivity, dtype=np.float64)
    selectable = np.flatnonzero(s > -np.inf)
    order = np.lexsort((np.arange(s.size), -s))
    order = order[np.isin(order, selectable)]
    mask = np.zeros(s.size, dtype=bool)
    mask[order[: min(k, selectable.size)]] = True
    return mask


@dataclass
class CounterfactualResult:
    """Outcome of one counterfactual run, shared by every method."""

    final_embedding: np.ndarray
    sequence: str
    original_sequence: str
    success: bool
    adversarial: bool
    steps_used: int
    confidence_trace: list
    edit_distance: int
    duration: float
    method: str = ""
    sample_id: int = -1
    seed: int = -1
    mutated_positions: list = field(default_factory=list)
    mask_union: list = field(default_factory=list)
    phase_seconds: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def final_confidence(self) -> float:
        return self.confidence_trace[-1] if self.confidence_trace else float("nan")

    @property
    def best_confidence(self) -> float:
        return max(self.confidence_trace) if self.confidence_trace else float("nan")

    def __post_init__(self):
        if self.success and self.adversarial:
            raise ValueError("success and adversarial are mutually exclusive")
        if self.success and self.edit_distance < 1:
            raise ValueError("a successful counterfactual must change the sequence")


def hamming(a: str, b: str) -> int:
    """Number of differing positions between two equal-length sequences."""
    if len(a) != len(b):
        raise ValueError("sequences must have equal length")
    return sum(x != y for x, y in zip(a, b))


def mutated_positions(a: str, b: str) -> list:
    return [i for i, (x, y) in enumerate(zip(a, b)) if x != y]


def counterfactual_step(
    z,
    z_orig,
    clf: EmbeddingClassifier,
    projector: Projector | None,
    signed_target: int,
    k: int,
    lambda_dist: float,
    margin: float,
    step_size: float,
    rng,
    fixed_mask=None,
    pad_mask=None,
):
    """One masked gradient step with hard reset and manifold projection.

    Returns (z_next, info); info carries the mask and the pre-projection
    iterate so callers can verify the reset invariant.
    """
    z = check_embedding(z)
    z_orig = check_embedding(z_orig)
    loss, grad = counterfactual_gradient(
        z, z_orig, clf, signed_target, margin, lambda_dist, pad_mask
    )
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite counterfactual gradient")
    if fixed_mask is not None:
        mask = np.asarray(fixed_mask, dtype=bool)
    else:
        mask = topk_mask(position_sensitivity(grad, pad_mask), k)
    z_next = z - step_size * grad * mask[:, None]
    z_next[~mask] = z_orig[~mask]
    pre_projection = z_next.copy()
    if projector is not None and projector.alpha > 0.0:
        z_next = projector.project(z_next, rng)
    info = {"loss": loss, "mask": mask, "pre_projection": pre_projection}
    return z_next, info


class ManifoldCounterfactual(BaseEstimator):
    """Sparse counterfactual generator with sensitivity masking and projection.

    Hyperparameters follow the sklearn convention; fit() binds the trained
    classifier, codebook, and projector, and explain() runs one sample.
    """

    method_name = "manifold"

    def __init__(
        self,
        k: int = 5,
        lambda_dist: float = 0.1,
        margin: float = 2.2,
        alpha: float = 0.3,
        t_diff: int = 100,
        prior_sigma: float = 0.8,
        step_size: float = 0.5,
        max_steps: int = 50,
        tau: float = 0.95,
        fixed_mask=None,
    ):
        self.k = k
        self.lambda_dist = lambda_dist
        self.margin = margin
        self.alpha = alpha
        self.t_diff = t_diff
        self.prior_sigma = prior_sigma
        self.step_size = step_size
        self.max_steps = max_steps
        self.tau = tau
        self.fixed_mask = fixed_mask

    def _validate(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.5 < self.tau <= 1.0:
            raise ValueError("tau must be in (0.5, 1]")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")

    def fit(self, classifier: EmbeddingClassifier, codebook: Codebook):
        """Bind the model under explanation and the latent codebook."""
        self._validate()
        classifier._check_fitted()
        self.classifier_ = classifier
        self.codebook_ = codebook
        self.projector_ = Projector(
            codebook, t_diff=self.t_diff, alpha=self.alpha, prior_sigma=self.prior_sigma
        )
        return self

    def explain(
        self, z_orig, signed_target: int = 1, rng=None, pad_mask=None, step_callback=None
    ) -> CounterfactualResult:
        """Search for a counterfactual embedding for one sample.

        The caller is responsible for only passing samples the classifier
        currently places on the opposite side of the target.
        """
        if not hasattr(self, "classifier_"):
            raise RuntimeError("call fit() with a classifier and codebook first")
        rng = check_rng(rng)
        z_orig = check_embedding(z_orig)
        t_start = time.perf_counter()
        phases = {"gradient": 0.0, "projection": 0.0, "reencode": 0.0}
        clf = self.classifier_
        seq_orig = decode(z_orig, self.codebook_)
        z = z_orig.copy()
        trace = [clf.confidence(z, signed_target, pad_mask)]
        mask_union = np.zeros(z_orig.shape[0], dtype=bool)
        best = (trace[0], z.copy(), 0)
        qualifying_unchanged = trace[0] >= self.tau
        steps = 0
        outcome = None
        for t in range(self.max_steps):
            t0 = time.perf_counter()
            loss, grad = counterfactual_gradient(
                z, z_orig, clf, signed_target, self.margin, self.lambda_dist, pad_mask
            )
            phases["gradient"] += time.perf_counter() - t0
            if not np.all(np.isfinite(grad)):
                raise FloatingPointError(f"non-finite gradient at step {t}")
            if self.fixed_mask is not None:
                mask = np.asarray(self.fixed_mask, dtype=bool)
            else:
                mask = topk_mask(position_sensitivity(grad, pad_mask), self.k)
            mask_union |= mask
            z_next = z - self.step_size * grad * mask[:, None]
            z_next[~mask] = z_orig[~mask]
            if step_callback is not None:
                step_callback(
                    {"step": t, "mask": mask, "pre_projection": z_next.copy(), "z_orig": z_orig}
                )
            if self.alpha > 0.0:
                t0 = time.perf_counter()
                z_next = self.projector_.project(z_next, rng)
                phases["projection"] += time.perf_counter() - t0
            z = z_next
            steps = t + 1
            conf = clf.confidence(z, signed_target, pad_mask)
            trace.append(conf)
            seq = decode(z, self.codebook_)
            if conf > best[0]:
                best = (conf, z.copy(), steps)
            if conf >= self.tau:
                if seq != seq_orig:
                    outcome = "success"
                    break
                qualifying_unchanged = True
        duration = time.perf_counter() - t_start
        if outcome == "success":
            final_z, final_seq = z, seq
            success, adversarial = True, False
        else:
            final_z = best[1]
            final_seq = decode(final_z, self.codebook_)
            success = False
            adversarial = qualifying_unchanged
        return CounterfactualResult(
            final_embedding=final_z,
            sequence=final_seq,
            original_sequence=seq_orig,
            success=success,
            adversarial=adversarial,
            steps_used=steps,
            confidence_trace=trace,
            edit_distance=hamming(final_seq, seq_orig),
            duration=duration,
            method=self.method_name,
            mutated_positions=mutated_positions(final_seq, seq_orig),
            mask_union=[int(i) for i in np.flatnonzero(mask_union)],
            phase_seconds=phases,
        )
