"""Synthetic position-wise latent world: codebook encoder/decoder, a
ground-truth epistatic scorer, score binarization, and labeled dataset
generation with stratified splits.

Every operation is deterministic given explicit seeds; embeddings are
regenerated from (sequence, dataset seed, item index) rather than stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_embedding, check_rng, check_sequence

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"

SPLIT_FRACTIONS = {"train": 0.8, "val": 0.1, "test": 0.1}


@dataclass
class Codebook:
    alphabet: str
    vectors: np.ndarray  # (A, D) one row per symbol
    min_separation: float

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector_for(self, residue: str) -> np.ndarray:
        return self.vectors[self.alphabet.index(residue)]


# Property-axis coordinates of the default codebook: a few residues form a
# "ladder" of stepping stones along one latent direction while the rest
# cluster near zero.  Gradient ascent toward high-axis codewords then crosses
# decoder boundaries in short hops, the way rich learned latent spaces put
# decoder boundaries close to every point.
DEFAULT_AXIS_POSITIONS = {"I": 0.9, "C": 1.8, "M": 2.7, "V": 3.6, "G": 4.5, "W": 5.4}


def build_codebook(
    alphabet_size: int = 20,
    dim: int = 16,
    seed: int = 0,
    min_separation: float = 1.0,
    scale: float | None = None,
    axis_positions: dict | None = None,
) -> Codebook:
    """Draw codeword rows and push apart any pair closer than min_separation.

    Without axis_positions the rows are isotropic Gaussian at the given
    scale.  With axis_positions, a unit axis direction is drawn from the
    seed, the named residues are placed at their axis coordinates, and all
    rows get Gaussian scatter (scale) in the axis's orthogonal complement
    plus a small clipped axis jitter for unnamed residues.  Deterministic
    given the seed; raises if the separation cannot be met within a bounded
    number of repulsion rounds.
    """
    if min_separation <= 0:
        raise ValueError("min_separation must be positive")
    if not 2 <= alphabet_size <= len(AMINO_ACIDS):
        raise ValueError(f"alphabet_size must be in [2, {len(AMINO_ACIDS)}]")
    rng = check_rng(seed)
    if scale is None:
        scale = min_separation
    if axis_positions is None:
        vectors = rng.normal(0.0, scale, size=(alphabet_size, dim))
    else:
        if dim < 2:
            raise ValueError("axis-structured codebooks need dim >= 2")
        axis = rng.normal(size=dim)
        axis /= np.linalg.norm(axis)
        basis = np.linalg.qr(np.column_stack([axis, rng.normal(size=(dim, dim - 1))]))[0]
        perp = basis[:, 1:]
        vectors = np.zeros((alphabet_size, dim))
        for i, residue in enumerate(AMINO_ACIDS[:alphabet_size]):
            if residue in axis_positions:
                coord = float(axis_positions[residue])
            else:
                coord = float(np.clip(rng.normal(0.0, scale), -2.3 * scale, 2.3 * scale))
            vectors[i] = coord * axis + perp @ rng.normal(0.0, scale, size=dim - 1)
    for _ in range(200):
        moved = False
        for i in range(alphabet_size):
            for j in range(i + 1, alphabet_size):
                diff = vectors[i] - vectors[j]
                dist = np.linalg.norm(diff)
                if dist >= min_separation:
                    continue
                moved = True
                if dist == 0.0:
                    diff = rng.normal(size=dim)
                    dist = np.linalg.norm(diff)
                push = 0.55 * (min_separation - dist) / dist
                vectors[i] += push * diff
                vectors[j] -= push * diff
        if not moved:
            break
    else:
        raise ValueError("could not satisfy the codeword separation constraint")
    return Codebook(AMINO_ACIDS[:alphabet_size], vectors, min_separation)


def encode(seq: str, codebook: Codebook, jitter_sigma: float = 0.0, rng=None) -> np.ndarray:
    """Map a sequence to an (L, D) embedding: codeword rows plus Gaussian jitter."""
    check_sequence(seq, codebook.alphabet)
    idx = [codebook.alphabet.index(c) for c in seq]
    z = codebook.vectors[idx].copy()
    if jitter_sigma > 0.0:
        z += check_rng(rng).normal(0.0, jitter_sigma, size=z.shape)
    return z


def decode(z, codebook: Codebook) -> str:
    """Nearest-codeword decoding, row-wise; ties go to the lowest alphabet index."""
    z = check_embedding(z, n_cols=codebook.dim)
    d2 = ((z[:, None, :] - codebook.vectors[None, :, :]) ** 2).sum(axis=2)
    return "".join(codebook.alphabet[i] for i in np.argmin(d2, axis=1))


def nearest_codeword_distances(z, codebook: Codebook) -> np.ndarray:
    """Per-row Euclidean distance to the closest codeword."""
    z = check_embedding(z, n_cols=codebook.dim)
    d2 = ((z[:, None, :] - codebook.vectors[None, :, :]) ** 2).sum(axis=2)
    return np.sqrt(d2.min(axis=1))


def nearest_codeword_indices(Z, codebook: Codebook) -> np.ndarray:
    """Argmin codeword index per row for a (..., D) stack of rows.

    Uses the |a-b|^2 = |a|^2 - 2ab + |b|^2 expansion; ties resolve to the
    lowest index like decode().
    """
    Z = np.asarray(Z, dtype=np.float64)
    cw = codebook.vectors
    d2 = (Z * Z).sum(axis=-1, keepdims=True) - 2.0 * (Z @ cw.T) + (cw * cw).sum(axis=1)
    return np.argmin(d2, axis=-1)


@dataclass
class WorldConfig:
    length: int = 12
    dim: int = 16
    alphabet_size: int = 20
    jitter_sigma: float = 0.05
    # (position, residue, weight) site bonuses; three strong sites carry the
    # class signal, weak sites de-tie scores and give discrete search a slope
    motif: list = field(
        default_factory=lambda: [
            (2, "W", 1.0),
            (5, "W", 1.03),
            (8, "W", 0.97),
            (0, "L", 0.10),
            (7, "T", 0.07),
        ]
    )
    # (pos_i, pos_j, residue_i, residue_j, bonus) joint bonuses
    epistatic_pairs: list = field(default_factory=lambda: [(4, 9, "D", "N", 0.03)])
    # fraction of low-scoring items mislabeled positive (false-positive assay
    # noise); keeps trained negative logits mild
    label_noise: float = 0.08
    min_separation: float = 0.5
    codeword_scale: float = 0.35
    axis_positions: dict | None = field(default_factory=lambda: dict(DEFAULT_AXIS_POSITIONS))
    seed: int = 7

    def __post_init__(self):
        for pos, res, _ in self.motif:
            if not 0 <= pos < self.length:
                raise ValueError(f"motif position {pos} outside sequence length {self.length}")
            if res not in AMINO_ACIDS[: self.alphabet_size]:
                raise ValueError(f"motif residue {res!r} outside the alphabet")
        for pi, pj, ri, rj, _ in self.epistatic_pairs:
            if not (0 <= pi < self.length and 0 <= pj < self.length):
                raise ValueError("epistatic pair position outside sequence length")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError("label_noise must be in [0, 1)")
        if self.jitter_sigma < 0.0:
            raise ValueError("jitter_sigma must be non-negative")
        if self.jitter_sigma >= self.min_separation / 2.0:
            raise ValueError("jitter_sigma must stay below min_separation/2 for decodability")

    def codebook(self) -> Codebook:
        return build_codebook(
            self.alphabet_size,
            self.dim,
            seed=self.seed,
            min_separation=self.min_separation,
            scale=self.codeword_scale,
            axis_positions=self.axis_positions,
        )

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "dim": self.dim,
            "alphabet_size": self.alphabet_size,
            "jitter_sigma": self.jitter_sigma,
            "motif": [list(m) for m in self.motif],
            "epistatic_pairs": [list(p) for p in self.epistatic_pairs],
            "label_noise": self.label_noise,
            "min_separation": self.min_separation,
            "codeword_scale": self.codeword_scale,
            "axis_positions": self.axis_positions,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        d["motif"] = [tuple(m) for m in d.get("motif", [])]
        d["epistatic_pairs"] = [tuple(p) for p in d.get("epistatic_pairs", [])]
        return cls(**d)


def ground_truth_score(seq: str, world: WorldConfig) -> float:
    """Deterministic fitness: site-match weights plus epistatic pair bonuses."""
    check_sequence(seq, AMINO_ACIDS[: world.alphabet_size], length=world.length)
    score = 0.0
    for pos, res, weight in world.motif:
        if seq[pos] == res:
            score += weight
    for pi, pj, ri, rj, bonus in world.epistatic_pairs:
        if seq[pi] == ri and seq[pj] == rj:
            score += bonus
    return score


def otsu_threshold(values, n_bins: int = 256) -> float:
    """Histogram threshold maximizing between-class variance.

    Candidates are the interior edges of an equal-width histogram over
    [min, max]; ties resolve to the lowest edge.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2 or np.min(values) == np.max(values):
        raise ValueError("need at least two distinct values")
    counts, edges = np.histogram(values, bins=n_bins, range=(values.min(), values.max()))
    centers = 0.5 * (edges[:-1] + edges[1:])
    w = counts.astype(np.float64)
    total = w.sum()
    cum_w = np.cumsum(w)[:-1]
    cum_mean = np.cumsum(w * centers)
    grand = cum_mean[-1]
    variances = np.full(n_bins - 1, -np.inf)
    valid = (cum_w > 0) & (cum_w < total)
    w0 = cum_w[valid]
    w1 = total - w0
    mu0 = cum_mean[:-1][valid] / w0
    mu1 = (grand - cum_mean[:-1][valid]) / w1
    variances[valid] = (w0 / total) * (w1 / total) * (mu0 - mu1) ** 2
    # empty gap bins make the variance curve exactly flat; resolve plateau
    # ties (up to float noise) to the lowest edge
    vmax = variances.max()
    best_k = int(np.flatnonzero(variances >= vmax - 1e-9 * abs(vmax))[0])
    return float(edges[best_k + 1])


def binarize_otsu(values) -> tuple[np.ndarray, np.ndarray]:
    """Labels via the Otsu threshold; every item is kept."""
    values = np.asarray(values, dtype=np.float64)
    thr = otsu_threshold(values)
    labels = (values > thr).astype(int)
    keep = np.ones(values.size, dtype=bool)
    if labels.min() == labels.max():
        raise ValueError("threshold produced a single class")
    return labels, keep


def binarize_middle_tercile(values) -> tuple[np.ndarray, np.ndarray]:
    """Label the bottom tercile 0 and the top tercile 1; mask out the middle.

    Comparisons against the tercile boundaries are strict, so boundary ties
    are removed along with the middle.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 3:
        raise ValueError("need at least three values")
    lo = np.percentile(values, 100.0 / 3.0)
    hi = np.percentile(values, 200.0 / 3.0)
    labels = np.zeros(values.size, dtype=int)
    keep = np.zeros(values.size, dtype=bool)
    below = values < lo
    above = values > hi
    labels[above] = 1
    keep[below | above] = True
    if not below.any() or not above.any():
        raise ValueError("degenerate score distribution: a tercile class is empty")
    return labels, keep


@dataclass
class DatasetItem:
    sequence: str
    raw_score: float
    label: int
    split: str


@dataclass
class LabeledDataset:
    world: WorldConfig
    codebook: Codebook
    items: list[DatasetItem]
    seed: int
    binarize: str

    def indices(self, split: str) -> list[int]:
        return [i for i, it in enumerate(self.items) if it.split == split]

    def item_rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, 1000 + index]))

    def embedding(self, index: int) -> np.ndarray:
        """Regenerate the jittered embedding of one item from its seed."""
        return encode(
            self.items[index].sequence,
            self.codebook,
            self.world.jitter_sigma,
            self.item_rng(index),
        )

    def split_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray, list[int]]:
        idx = self.indices(split)
        Z = np.stack([self.embedding(i) for i in idx])
        y = np.array([self.items[i].label for i in idx])
        return Z, y, idx


def _sample_sequence(world: WorldConfig, rng: np.random.Generator, plant_prob: float = 0.5) -> str:
    alphabet = AMINO_ACIDS[: world.alphabet_size]
    chars = [alphabet[i] for i in rng.integers(0, len(alphabet), size=world.length)]
    # bias sampling so both score extremes are populated
    for pos, res, _ in world.motif:
        if rng.random() < plant_prob:
            chars[pos] = res
    for pi, pj, ri, rj, _ in world.epistatic_pairs:
        if rng.random() < plant_prob:
            chars[pi] = ri
        if rng.random() < plant_prob:
            chars[pj] = rj
    return "".join(chars)


def _stratified_split(labels: np.ndarray, rng: np.random.Generator) -> list[str]:
    """80/10/10 split per label class, within one item of the exact fractions."""
    splits = [""] * labels.size
    for lab in (0, 1):
        idx = np.flatnonzero(labels == lab)
        if idx.size < 3:
            raise ValueError(f"class {lab} has fewer than 3 items, cannot split")
        idx = idx[rng.permutation(idx.size)]
        n_val = max(1, int(round(idx.size * SPLIT_FRACTIONS["val"])))
        n_test = max(1, int(round(idx.size * SPLIT_FRACTIONS["test"])))
        for i in idx[: idx.size - n_val - n_test]:
            splits[i] = "train"
        for i in idx[idx.size - n_val - n_test : idx.size - n_test]:
            splits[i] = "val"
        for i in idx[idx.size - n_test :]:
            splits[i] = "test"
    return splits


def make_dataset(
    world: WorldConfig, n: int, seed: int = 0, binarize: str = "tercile"
) -> LabeledDataset:
    """Sample, score, binarize, and split a labeled dataset; reproducible from seed."""
    if n < 30:
        raise ValueError("n must be at least 30")
    if binarize not in ("tercile", "otsu"):
        raise ValueError("binarize must be 'tercile' or 'otsu'")
    codebook = world.codebook()
    last_err = None
    for attempt in range(5):
        rng = check_rng(np.random.SeedSequence([seed, attempt]))
        seqs = [_sample_sequence(world, rng) for _ in range(n)]
        scores = np.array([ground_truth_score(s, world) for s in seqs])
        try:
            if binarize == "tercile":
                labels, keep = binarize_middle_tercile(scores)
            else:
                labels, keep = binarize_otsu(scores)
            if world.label_noise > 0.0:
                # false-positive assay noise: a fraction of low-scoring items
                # carry label 1, which keeps the trained negative logits mild
                flips = (rng.random(n) < world.label_noise) & (labels == 0)
                labels = np.where(flips, 1, labels)
            kept = np.flatnonzero(keep)
            splits = _stratified_split(labels[kept], rng)
        except ValueError as err:
            last_err = err
            continue
        items = [
            DatasetItem(seqs[i], float(scores[i]), int(labels[i]), splits[j])
            for j, i in enumerate(kept)
        ]
        return LabeledDataset(world, codebook, items, seed=seed, binarize=binarize)
    raise ValueError(f"dataset generation failed after retries: {last_err}")


def save_dataset(dataset: LabeledDataset, directory) -> None:
    """Manifest JSON plus one CSV-ish record line per item."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    counts = {s: len(dataset.indices(s)) for s in ("train", "val", "test")}
    manifest = {
        "format": 1,
        "world": dataset.world.to_dict(),
        "seed": dataset.seed,
        "binarize": dataset.binarize,
        "n_items": len(dataset.items),
        "split_counts": counts,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    lines = ["index,split,label,raw_score,sequence"]
    for i, it in enumerate(dataset.items):
        lines.append(f"{i},{it.split},{it.label},{it.raw_score!r},{it.sequence}")
    (directory / "records.csv").write_text("\n".join(lines) + "\n")


def load_dataset(directory) -> LabeledDataset:
    from pathlib import Path

    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    world = WorldConfig.from_dict(manifest["world"])
    items = []
    lines = (directory / "records.csv").read_text().strip().split("\n")[1:]
    for line in lines:
        idx, split, label, raw_score, sequence = line.split(",")
        items.append(DatasetItem(sequence, float(raw_score), int(label), split))
    return LabeledDataset(
        world, world.codebook(), items, seed=manifest["seed"], binarize=manifest["binarize"]
    )
