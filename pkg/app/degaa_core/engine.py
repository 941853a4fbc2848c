from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from threading import Event
from time import perf_counter
from typing import Any, Callable, Dict, List, Optional, Sequence

from .artifacts import METRICS, PREREQUISITES, PRODUCER, ArtifactStore
from .config import ALL_STAGES, RunConfig, StageName, config_hash
from .errors import ArtifactIOError, DegaaConfigError, DegaaError, PipelineCancelled
from .stages import adapt, embed, evaluate, gen, warmup

LogCallback = Callable[[str], None]
ProgressCallback = Callable[[int, int, str], None]

logger = logging.getLogger(__name__)

STAGE_LABELS: Dict[str, str] = {
    "gen": "Generate dataset",
    "embed": "Domain embeddings",
    "warmup": "Warm-up training",
    "adapt": "Adaptation",
    "eval": "Evaluation",
}

STAGE_TAGS: Dict[str, str] = {
    "gen": "GEN",
    "embed": "EMBED",
    "warmup": "WARMUP",
    "adapt": "ADAPT",
    "eval": "EVAL",
}


@dataclass
class PipelineResult:
    out_dir: Path
    config_hash: str
    seed: int
    stages: List[str] = field(default_factory=list)
    created_files: List[Path] = field(default_factory=list)
    stats: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    metrics: Optional[Dict[str, Any]] = None
    duration_seconds: Optional[float] = None


def order_stages(stages: Sequence[str]) -> List[StageName]:
    invalid = [s for s in stages if s not in ALL_STAGES]
    if invalid:
        raise DegaaConfigError(f"Unknown stages: {', '.join(invalid)} (expected {', '.join(ALL_STAGES)})")
    wanted = set(stages)
    return [s for s in ALL_STAGES if s in wanted]


class PipelineEngine:
    def __init__(
        self,
        cfg: RunConfig,
        out_dir: Path,
        logger_instance: Optional[logging.Logger] = None,
        log_callback: Optional[LogCallback] = None,
        progress_callback: Optional[ProgressCallback] = None,
    ) -> None:
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.logger = logger_instance or logger
        self.log_callback = log_callback
        self.progress_callback = progress_callback
        self.cancel_event: Event = Event()
        self.store = ArtifactStore(self.out_dir, config_hash(cfg), cfg.seed)

    # ------------------------------------------------------------------ #
    # Logging and progress helpers
    # ------------------------------------------------------------------ #
    def _emit_progress(self, phase_index: int, phase_total: int, label: str) -> None:
        if self.progress_callback:
            self.progress_callback(phase_index, phase_total, label)

    def _log(self, level: int, tag: str, message: str) -> None:
        text = f"[{tag}] {message}"
        self.logger.log(level, text)
        if self.log_callback:
            self.log_callback(text)

    def _warn(self, message: str) -> None:
        self._log(logging.WARNING, "WARN", message)

    def cancel(self) -> None:
        self.cancel_event.set()

    def _check_cancelled(self) -> None:
        if self.cancel_event.is_set():
            raise PipelineCancelled("Pipeline cancelled by user")

    # ------------------------------------------------------------------ #
    # Core execution
    # ------------------------------------------------------------------ #
    def _phase_prechecks(self, stages: List[StageName]) -> None:
        self._log(logging.INFO, "PRECHECK", f"Output directory: {self.out_dir}")
        self._log(logging.INFO, "PRECHECK", f"Config hash {self.store.config_hash}, seed {self.cfg.seed}")
        if self.out_dir.exists() and not self.out_dir.is_dir():
            raise DegaaConfigError(f"Output path is not a directory: {self.out_dir}")
        # An input is satisfied if it is on disk or an earlier requested stage writes it.
        produced = set()
        for stage in stages:
            for name in PREREQUISITES[stage]:
                if PRODUCER[name] not in produced:
                    if not self.store.exists(name):
                        self.store.require(stage)
            produced.add(stage)

    def _run_stage(self, stage: StageName) -> Dict[str, Any]:
        self.store.require(stage)
        check = self._check_cancelled
        if stage == "gen":
            stats = gen.run(self.cfg, self.store, check)
        elif stage == "embed":
            stats = embed.run(self.cfg, self.store, check, self._warn)
        elif stage == "warmup":
            stats = warmup.run(self.cfg, self.store, check)
        elif stage == "adapt":
            stats = adapt.run(self.cfg, self.store, check)
        else:
            stats = evaluate.run(self.cfg, self.store, check)
        return asdict(stats)

    def run_pipeline(self, stages: Optional[Sequence[str]] = None) -> PipelineResult:
        ordered = order_stages(stages if stages is not None else ALL_STAGES)
        result = PipelineResult(out_dir=self.out_dir, config_hash=self.store.config_hash, seed=self.cfg.seed)
        start_perf = perf_counter()

        phases = ["Pre-checks"] + [STAGE_LABELS[s] for s in ordered] + ["Summary"]
        phase_total = len(phases)

        try:
            self._emit_progress(1, phase_total, "Pre-checks")
            self._phase_prechecks(ordered)
            self.out_dir.mkdir(parents=True, exist_ok=True)

            for index, stage in enumerate(ordered, start=2):
                self._emit_progress(index, phase_total, STAGE_LABELS[stage])
                self._check_cancelled()
                tag = STAGE_TAGS[stage]
                self._log(logging.INFO, tag, f"{STAGE_LABELS[stage]}...")
                before = {p for p in self.out_dir.iterdir() if p.is_file()}
                t0 = perf_counter()
                stats = self._run_stage(stage)
                result.timings[stage] = perf_counter() - t0
                result.stats[stage] = stats
                result.stages.append(stage)
                after = {p for p in self.out_dir.iterdir() if p.is_file()}
                result.created_files.extend(sorted(after - before))
                summary = ", ".join(f"{k}={v}" for k, v in stats.items())
                self._log(logging.INFO, tag, f"done in {result.timings[stage]:.2f}s ({summary})")

            self._emit_progress(phase_total, phase_total, "Summary")
            if self.store.exists(METRICS):
                result.metrics = self.store.read_json(METRICS)
                self._log(
                    logging.INFO,
                    "SUMMARY",
                    f"OS={result.metrics['os']:.4f} OS*={result.metrics['os_star']:.4f} "
                    f"unknown_recall={result.metrics['unknown_recall']}",
                )
        except PipelineCancelled as exc:
            self._log(logging.WARNING, "CANCEL", str(exc))
            raise
        except DegaaError:
            raise
        except OSError as exc:
            raise ArtifactIOError(str(exc)) from exc
        finally:
            result.duration_seconds = perf_counter() - start_perf

        return result


def run_seeds(
    cfg: RunConfig,
    out_dir: Path,
    seeds: int,
    stages: Optional[Sequence[str]] = None,
    log_callback: Optional[LogCallback] = None,
    progress_callback: Optional[ProgressCallback] = None,
) -> Dict[str, Any]:
    """Run seeds cfg.seed .. cfg.seed+seeds-1 into seed_<s>/ and write summary.json with the means."""
    if seeds < 1:
        raise DegaaConfigError(f"--seeds must be >= 1, got {seeds}")
    out_dir = Path(out_dir)
    per_seed: List[Dict[str, Any]] = []
    for offset in range(seeds):
        seed = cfg.seed + offset
        engine = PipelineEngine(
            cfg.with_seed(seed),
            out_dir / f"seed_{seed}",
            log_callback=log_callback,
            progress_callback=progress_callback,
        )
        result = engine.run_pipeline(stages)
        if result.metrics is None:
            continue
        per_seed.append(
            {
                "seed": seed,
                "os": result.metrics["os"],
                "os_star": result.metrics["os_star"],
                "unknown_recall": result.metrics["unknown_recall"],
            }
        )

    def _mean(key: str) -> Optional[float]:
        values = [row[key] for row in per_seed if row[key] is not None]
        return sum(values) / len(values) if values else None

    summary = {
        "config_hash": config_hash(cfg),
        "seeds": [row["seed"] for row in per_seed],
        "per_seed": per_seed,
        "mean": {key: _mean(key) for key in ("os", "os_star", "unknown_recall")},
    }
    store = ArtifactStore(out_dir, summary["config_hash"], cfg.seed)
    store.write_text("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
