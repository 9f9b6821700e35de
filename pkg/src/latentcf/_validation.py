"""Small input-validation helpers shared across the public API."""

from __future__ import annotations

import numbers

import numpy as np


def check_rng(seed=None) -> np.random.Generator:
    """Return a numpy Generator from an int seed, SeedSequence, Generator, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def check_embedding(z, n_cols: int | None = None, name: str = "z") -> np.ndarray:
    """Validate a single (length, dim) embedding and return it as float64."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"{name} must be a 2-d (length, dim) array, got shape {z.shape}")
    if z.shape[0] < 1 or z.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains non-finite entries")
    if n_cols is not None and z.shape[1] != n_cols:
        raise ValueError(f"{name} has {z.shape[1]} columns, expected {n_cols}")
    return z


def check_embedding_batch(Z, name: str = "Z") -> np.ndarray:
    """Validate a stacked (n, length, dim) batch of embeddings."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 2:
        Z = Z[None, :, :]
    if Z.ndim != 3:
        raise ValueError(f"{name} must be a 3-d (n, length, dim) array, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError(f"{name} contains non-finite entries")
    return Z


def check_sequence(seq: str, alphabet: str, length: int | None = None) -> str:
    if not isinstance(seq, str) or len(seq) < 1:
        raise ValueError("sequence must be a non-empty string")
    bad = set(seq) - set(alphabet)
    if bad:
        raise ValueError(f"sequence contains characters outside the alphabet: {sorted(bad)}")
    if length is not None and len(seq) != length:
        raise ValueError(f"sequence has length {len(seq)}, expected {length}")
    return seq


def check_pad_mask(pad_mask, length: int) -> np.ndarray | None:
    if pad_mask is None:
        return None
    mask = np.asarray(pad_mask, dtype=bool)
    if mask.shape != (length,):
        raise ValueError(f"pad mask must have shape ({length},), got {mask.shape}")
    return mask
