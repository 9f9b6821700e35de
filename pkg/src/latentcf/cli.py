"""Command-line entry point.

Subcommands: gen-data, train, run, ablate, report.  All outputs land under
the --out directory with stable file names.  Exit codes: 0 success, 2 bad
configuration, 3 data problems, 4 training failures, 5 campaign failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .campaign import (
    generate_datasets,
    load_datasets,
    rebuild_reports,
    run_ablation,
    run_campaign,
    train_all,
)
from .classifier import TrainingError
from .config import CampaignConfig, ConfigError, load_config

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAIN = 4
EXIT_CAMPAIGN = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentcf",
        description="Counterfactual optimization campaigns over a synthetic "
        "position-wise latent world",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen-data", "generate and persist the per-seed datasets"),
        ("train", "train the unsmoothed/smoothed predictor pair per seed"),
        ("run", "run the configured counterfactual methods over the test set"),
        ("ablate", "run the smoothing/projection/k ablation grid"),
        ("report", "rebuild aggregate reports from campaign.csv"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, default=None, help="INI config file")
        cmd.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        cmd.add_argument("--seed", type=str, default=None,
                         help="comma-separated seed list overriding the config")
        if name in ("run",):
            cmd.add_argument("--methods", type=str, default=None,
                             help="comma-separated subset of manifold,gd,hillclimb,ga")
        if name in ("run", "ablate"):
            cmd.add_argument("--jobs", type=int, default=None, help="worker threads per campaign")
    return parser


def _load(args) -> CampaignConfig:
    cfg = load_config(args.config)
    if args.seed:
        try:
            cfg.campaign.seeds = tuple(int(s) for s in args.seed.split(",") if s.strip())
        except ValueError as err:
            raise ConfigError(f"bad --seed list: {err}") from None
        if not cfg.campaign.seeds:
            raise ConfigError("--seed list is empty")
    if getattr(args, "jobs", None):
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg.campaign.jobs = args.jobs
    if getattr(args, "methods", None):
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
        unknown = set(methods) - {"manifold", "gd", "hillclimb", "ga"}
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")
        cfg.campaign.methods = methods
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "gen-data":
            generate_datasets(cfg, args.out)
            print(f"datasets written under {args.out}/data")
        elif args.command == "train":
            datasets = load_datasets(cfg, args.out)
            train_all(cfg, datasets, args.out)
            print(f"predictors and train_report.csv written under {args.out}")
        elif args.command == "run":
            run_campaign(cfg, args.out)
            print(f"campaign reports written under {args.out}")
        elif args.command == "ablate":
            run_ablation(cfg, args.out)
            print(f"ablation.csv written under {args.out}")
        elif args.command == "report":
            rebuild_reports(cfg, args.out)
            print(f"aggregate reports rebuilt under {args.out}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as err:
        print(f"training error: {err}", file=sys.stderr)
        return EXIT_TRAIN
    except Exception as err:  # campaign-level failures
        print(f"campaign error: {err}", file=sys.stderr)
        return EXIT_CAMPAIGN
    return 0


if __name__ == "__main__":
    sys.exit(main())
