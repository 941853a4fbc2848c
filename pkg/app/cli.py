"""
Command-line entry point.

    python -m app.cli all --config app/resources/desk_benchmark.json --out runs/desk
    python -m app.cli ablate embedding --out runs/desk
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from tqdm import tqdm

from .degaa_core.ablation import run_ablation
from .degaa_core.config import ALL_STAGES, DEFAULT_CONFIG_PATH, AblationName, RunConfig, parse_config
from .degaa_core.engine import PipelineEngine, run_seeds
from .degaa_core.errors import (
    DegaaConfigError,
    DegaaError,
    MissingPrerequisiteError,
    NumericError,
    PipelineCancelled,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PREREQUISITE = 3
EXIT_NUMERIC = 4
EXIT_CANCELLED = 130

logger = logging.getLogger("degaa")


def configure_logging() -> None:
    level_name = os.environ.get("DEGAA_LOG", "info").strip().lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(level_name, logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="degaa", description="Open-set multi-domain adaptation pipeline")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help=f"run config JSON (default {DEFAULT_CONFIG_PATH.name})")
    common.add_argument("--out", type=Path, default=Path("runs/default"), help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--seeds", type=int, default=None, help="run N consecutive seeds and write summary.json")
    common.add_argument(
        "--refresh-centroids",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="recompute centroids at every pseudo-label refresh",
    )
    common.add_argument("--strict-intra", action="store_true", default=None, help="intra-role edges only across domains")
    common.add_argument("--resample-per-episode", action="store_true", default=None, help="new source batch every episode")
    common.add_argument("--no-progress", action="store_true", help="disable the progress bar")

    sub = parser.add_subparsers(dest="command", required=True)
    for stage in ALL_STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the '{stage}' stage")
    run_all = sub.add_parser("all", parents=[common], help="run a list of stages (default: all)")
    run_all.add_argument("--stages", type=str, default=",".join(ALL_STAGES), help="comma-separated stage list")
    ablate = sub.add_parser("ablate", parents=[common], help="run a comparison study")
    ablate.add_argument("which", choices=[a.value for a in AblationName])
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    path = args.config if args.config is not None else DEFAULT_CONFIG_PATH
    cfg = parse_config(path) if path.exists() or args.config is not None else RunConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise DegaaConfigError(f"--seed must be >= 0, got {args.seed}")
        cfg = cfg.with_seed(args.seed)
    if args.refresh_centroids is not None:
        cfg = replace(cfg, adapt=replace(cfg.adapt, refresh_centroids=args.refresh_centroids))
    if args.resample_per_episode:
        cfg = replace(cfg, adapt=replace(cfg.adapt, resample_per_episode=True))
    if args.strict_intra:
        cfg = replace(cfg, gaa=replace(cfg.gaa, strict_intra=True))
    return cfg


def parse_stage_list(text: str) -> List[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


class _ProgressBar:
    """Phase-level tqdm bar fed by the engine's progress callback."""

    def __init__(self, enabled: bool) -> None:
        self.enabled = enabled
        self.bar: Optional[tqdm] = None

    def __call__(self, index: int, total: int, label: str) -> None:
        if not self.enabled:
            return
        if self.bar is None or index == 1:
            if self.bar is not None:
                self.bar.close()
            self.bar = tqdm(total=total, unit="phase", leave=False)
        self.bar.set_description(label)
        self.bar.n = index
        self.bar.refresh()

    def close(self) -> None:
        if self.bar is not None:
            self.bar.close()
            self.bar = None


def run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    progress = _ProgressBar(enabled=not args.no_progress)
    try:
        if args.command == "ablate":
            if args.seeds is not None:
                raise DegaaConfigError("--seeds does not apply to 'ablate'; run the study once per --seed")
            report = run_ablation(cfg, AblationName(args.which), args.out, progress_callback=progress)
            logger.info("[SUMMARY] %s report: %s", report.which.value, report.report_path)
            return EXIT_OK

        stages = parse_stage_list(args.stages) if args.command == "all" else [args.command]
        if args.seeds is not None:
            summary = run_seeds(cfg, args.out, args.seeds, stages, progress_callback=progress)
            logger.info("[SUMMARY] %s", json.dumps(summary["mean"], sort_keys=True))
            return EXIT_OK

        engine = PipelineEngine(cfg, args.out, progress_callback=progress)
        result = engine.run_pipeline(stages)
        for path in result.created_files:
            logger.info("[SUMMARY] wrote %s", path)
        return EXIT_OK
    finally:
        progress.close()


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except DegaaConfigError as exc:
        logger.error("[CONFIG] %s", exc)
        return EXIT_CONFIG
    except MissingPrerequisiteError as exc:
        logger.error("[PRECHECK] %s", exc)
        return EXIT_PREREQUISITE
    except NumericError as exc:
        logger.error("[NUMERIC] %s", exc)
        return EXIT_NUMERIC
    except PipelineCancelled as exc:
        logger.warning("[CANCEL] %s", exc)
        return EXIT_CANCELLED
    except DegaaError as exc:
        logger.error("[ERROR] %s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
