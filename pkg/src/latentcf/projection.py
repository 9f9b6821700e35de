"""Manifold prior: forward partial diffusion plus an analytic denoiser.

The prior treats each embedding row as "uniform codeword + isotropic Gaussian
of width prior_sigma".  Under the variance-preserving forward kernel
z_t = sqrt(abar_t) z_0 + sqrt(1-abar_t) eps, the posterior mean E[z_0 | z_t]
has a closed form: a softmax-weighted blend of per-codeword shrinkage
targets.  Projection noises an iterate to a fixed level, denoises it, and
blends the result with the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_embedding, check_rng
from .world import Codebook


@dataclass
class NoiseSchedule:
    """Linear variance schedule; abar[t] is the cumulative signal fraction."""

    total_steps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 2e-2
    betas: np.ndarray = field(init=False, repr=False)
    alpha_bar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0.0 < self.beta_min <= self.beta_max < 1.0:
            raise ValueError("need 0 < beta_min <= beta_max < 1")
        self.betas = np.linspace(self.beta_min, self.beta_max, self.total_steps)
        # alpha_bar[0] = 1 by convention (t = 0 means "no noise")
        self.alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - self.betas)])

    def signal_noise(self, t: int) -> tuple[float, float]:
        """(sqrt(abar_t), 1 - abar_t) for a step index t in [0, total_steps]."""
        if not 0 <= t <= self.total_steps:
            raise ValueError(f"t must be in [0, {self.total_steps}]")
        abar = float(self.alpha_bar[t])
        return np.sqrt(abar), 1.0 - abar


def forward_noise(z, t: int, schedule: NoiseSchedule, rng) -> np.ndarray:
    """Partially diffuse z to step t: sqrt(abar) z + sqrt(1-abar) eps."""
    z = check_embedding(z)
    s, var = schedule.signal_noise(t)
    if var == 0.0:
        return z.copy()
    eps = check_rng(rng).standard_normal(z.shape)
    return s * z + np.sqrt(var) * eps


def denoise_estimate(
    z_t, t: int, codebook: Codebook, prior_sigma: float, schedule: NoiseSchedule
) -> np.ndarray:
    """Exact posterior mean E[z_0 | z_t] under the codeword-cluster prior.

    Per row: weights w_c = softmax(-|z_t - s c|^2 / (2 (s^2 sig^2 + var)))
    over codewords c, and the blended shrinkage target
    (var * sum_c w_c c + sig^2 s z_t) / (s^2 sig^2 + var).
    """
    z_t = check_embedding(z_t, n_cols=codebook.dim)
    if prior_sigma < 0:
        raise ValueError("prior_sigma must be non-negative")
    s, var = schedule.signal_noise(t)
    marg_var = s * s * prior_sigma * prior_sigma + var
    cw = codebook.vectors
    if marg_var == 0.0:
        # no noise anywhere: the observation pins z_0 exactly
        return z_t.copy()
    d2 = ((z_t[:, None, :] - s * cw[None, :, :]) ** 2).sum(axis=2)
    logits = -d2 / (2.0 * marg_var)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    return (var * (w @ cw) + (prior_sigma**2) * s * z_t) / marg_var


@dataclass
class Projector:
    """Bundles the codebook prior with the projection hyperparameters.

    The default prior width is a sizeable fraction of the codeword spacing:
    a tube as tight as the encoder jitter turns the denoiser into a hard
    vertex snap whose pullback the masked gradient steps cannot out-run.
    """

    codebook: Codebook
    t_diff: int = 100
    alpha: float = 0.3
    prior_sigma: float = 0.8
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 1 <= self.t_diff <= self.schedule.total_steps:
            raise ValueError("t_diff must be in [1, total_steps]")

    def denoise(self, z_t) -> np.ndarray:
        return denoise_estimate(z_t, self.t_diff, self.codebook, self.prior_sigma, self.schedule)

    def project(self, z, rng) -> np.ndarray:
        """(1 - alpha) z + alpha * denoise(noise(z)); identity when alpha = 0.

        With alpha = 0 the input is returned unchanged and the noise stream
        is not consumed.
        """
        z = check_embedding(z, n_cols=self.codebook.dim)
        if self.alpha == 0.0:
            return z.copy()
        z_t = forward_noise(z, self.t_diff, self.schedule, rng)
        return (1.0 - self.alpha) * z + self.alpha * self.denoise(z_t)


def project(z, codebook: Codebook, rng, t_diff: int = 100, alpha: float = 0.3,
            prior_sigma: float = 0.8, schedule: NoiseSchedule | None = None) -> np.ndarray:
    """Functional form of Projector.project for one-off use."""
    proj = Projector(
        codebook,
        t_diff=t_diff,
        alpha=alpha,
        prior_sigma=prior_sigma,
        schedule=schedule if schedule is not None else NoiseSchedule(),
    )
    return proj.project(z, rng)
