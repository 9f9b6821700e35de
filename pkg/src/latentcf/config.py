"""Declarative campaign configuration: one INI-style file with sectioned
key-value pairs; every hyperparameter has a baked-in default so an empty
file reproduces the default campaign."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .world import DEFAULT_AXIS_POSITIONS, WorldConfig


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSection:
    n: int = 600
    binarize: str = "tercile"  # or "otsu"


@dataclass
class TrainSection:
    hidden_sizes: tuple = (256, 128)
    learning_rate: float = 2.5e-3
    dropout: float = 0.0
    patience: int = 200
    max_epochs: int = 200
    batch_size: int = 32

    def overrides(self) -> dict:
        return {
            "hidden_sizes": tuple(self.hidden_sizes),
            "learning_rate": self.learning_rate,
            "dropout": self.dropout,
            "patience": self.patience,
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
        }


@dataclass
class SmoothingSection:
    spectral_norm: bool = True
    jacobian_lambda: float = 1e-3
    jacobian_probes: int = 5
    fgsm_epsilon: float = 0.01
    fgsm_augment: bool = True
    softplus: bool = True
    beta: float = 1.0

    def overrides(self) -> dict:
        return {
            "spectral_norm": self.spectral_norm,
            "jacobian_lambda": self.jacobian_lambda,
            "jacobian_probes": self.jacobian_probes,
            "fgsm_epsilon": self.fgsm_epsilon,
            "fgsm_augment": self.fgsm_augment,
            "softplus": self.softplus,
            "beta": self.beta,
        }


@dataclass
class ManifoldSection:
    k: int = 5
    lambda_dist: float = 0.1
    margin: float = 2.2
    alpha: float = 0.3
    t_diff: int = 100
    prior_sigma: float = 0.8
    step_size: float = 0.5
    max_steps: int = 50
    tau: float = 0.95


@dataclass
class GdSection:
    learning_rate: float = 1e-2
    steps: int = 50
    tau: float = 0.95


@dataclass
class HillClimbSection:
    max_steps: int = 50
    tau: float = 0.95


@dataclass
class GaSection:
    population: int = 40
    generations: int = 30
    crossover_rate: float = 0.5
    edit_penalty: float = 0.02
    tau: float = 0.95
    elite_fraction: float = 0.2
    tournament_size: int = 3
    eval_batch: int = 8


@dataclass
class CampaignSection:
    seeds: tuple = (0, 1, 2)
    methods: tuple = ("manifold", "gd", "hillclimb", "ga")
    jobs: int = 1
    ablation_k: tuple = (1, 3, 5, 12)
    max_ablation_cells: int = 32


@dataclass
class CampaignConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    train: TrainSection = field(default_factory=TrainSection)
    smoothing: SmoothingSection = field(default_factory=SmoothingSection)
    manifold: ManifoldSection = field(default_factory=ManifoldSection)
    gd: GdSection = field(default_factory=GdSection)
    hillclimb: HillClimbSection = field(default_factory=HillClimbSection)
    ga: GaSection = field(default_factory=GaSection)
    campaign: CampaignSection = field(default_factory=CampaignSection)


def _parse_value(raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ConfigError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if not raw:
                return ()
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(x) for x in items)
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            return tuple(items)
        return raw
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(f"bad value {raw!r}: {err}") from None


def _parse_motif(raw: str) -> list:
    """pos:residue:weight triples, comma separated."""
    out = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        pos, res, weight = part.split(":")
        out.append((int(pos), res.strip(), float(weight)))
    return out


def _parse_pairs(raw: str) -> list:
    """pos_i:pos_j:res_i:res_j:bonus tuples, comma separated."""
    out = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        pi, pj, ri, rj, bonus = part.split(":")
        out.append((int(pi), int(pj), ri.strip(), rj.strip(), float(bonus)))
    return out


def _parse_axis(raw: str) -> dict | None:
    """residue:coordinate pairs, comma separated; 'none' disables the axis."""
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    out = {}
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        res, coord = part.split(":")
        out[res.strip()] = float(coord)
    return out


_WORLD_SPECIAL = {"motif": _parse_motif, "epistatic_pairs": _parse_pairs, "axis_positions": _parse_axis}


def _apply_section(obj, parser: configparser.ConfigParser, section: str):
    if not parser.has_section(section):
        return obj
    valid = {f.name for f in fields(obj)}
    for key, raw in parser.items(section):
        if key not in valid:
            raise ConfigError(f"unknown option [{section}] {key}")
        if section == "world" and key in _WORLD_SPECIAL:
            setattr(obj, key, _WORLD_SPECIAL[key](raw))
        else:
            setattr(obj, key, _parse_value(raw, getattr(obj, key)))
    return obj


def load_config(path=None) -> CampaignConfig:
    """Defaults, optionally overridden by an INI file."""
    cfg = CampaignConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read(path)
    known = {"world", "dataset", "train", "smoothing", "manifold", "gd", "hillclimb", "ga", "campaign"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    world_kwargs = {}
    if parser.has_section("world"):
        valid = {f.name for f in fields(WorldConfig)}
        for key, raw in parser.items("world"):
            if key not in valid:
                raise ConfigError(f"unknown option [world] {key}")
            if key in _WORLD_SPECIAL:
                world_kwargs[key] = _WORLD_SPECIAL[key](raw)
            else:
                world_kwargs[key] = _parse_value(raw, getattr(WorldConfig(), key))
    if world_kwargs:
        cfg.world = WorldConfig(**world_kwargs)
    _apply_section(cfg.dataset, parser, "dataset")
    _apply_section(cfg.train, parser, "train")
    _apply_section(cfg.smoothing, parser, "smoothing")
    _apply_section(cfg.manifold, parser, "manifold")
    _apply_section(cfg.gd, parser, "gd")
    _apply_section(cfg.hillclimb, parser, "hillclimb")
    _apply_section(cfg.ga, parser, "ga")
    _apply_section(cfg.campaign, parser, "campaign")
    if not cfg.campaign.seeds:
        raise ConfigError("at least one seed is required")
    if not cfg.campaign.methods:
        raise ConfigError("at least one method is required")
    bad = set(cfg.campaign.methods) - {"manifold", "gd", "hillclimb", "ga"}
    if bad:
        raise ConfigError(f"unknown methods: {sorted(bad)}")
    if cfg.dataset.binarize not in ("tercile", "otsu"):
        raise ConfigError("dataset.binarize must be 'tercile' or 'otsu'")
    return cfg
