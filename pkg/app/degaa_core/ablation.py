"""
Matched comparison studies.

Each study runs the full pipeline once per variant under the same seed, each
variant in its own directory, and writes ``report.csv`` with one row per
variant. The label-curve study also writes the per-refresh pseudo-label
accuracy series.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from .artifacts import REFRESH_LOG, ArtifactStore
from .backbone import CombineMode
from .config import AblationName, RunConfig, config_hash
from .engine import LogCallback, PipelineEngine, ProgressCallback
from .gaa import Aggregation

logger = logging.getLogger(__name__)

Variant = Tuple[str, Dict[str, Any], RunConfig]


@dataclass
class AblationReport:
    which: AblationName
    rows: List[Dict[str, Any]] = field(default_factory=list)
    report_path: Optional[Path] = None
    curve_path: Optional[Path] = None


def _with(cfg: RunConfig, **sections: Any) -> RunConfig:
    return replace(cfg, **sections)


def build_variants(cfg: RunConfig, which: AblationName) -> List[Variant]:
    """(name, parameters, config) for every variant of a study."""
    which = AblationName(which)
    if which is AblationName.EMBEDDING:
        return [
            (f"embedding_{'on' if flag else 'off'}", {"use_domain_embedding": flag},
             _with(cfg, warmup=replace(cfg.warmup, use_domain_embedding=flag)))
            for flag in (True, False)
        ]
    if which is AblationName.COMBINE:
        # both variants share d_e_dim == in_dim so only the combine rule differs
        embed = replace(cfg.embed, d_e_dim=cfg.data.in_dim)
        return [
            (mode.value, {"combine_mode": mode.value, "d_e_dim": cfg.data.in_dim},
             _with(cfg, embed=embed, warmup=replace(cfg.warmup, combine_mode=mode)))
            for mode in (CombineMode.CONCAT, CombineMode.ELEMENTWISE_MUL)
        ]
    if which is AblationName.AGGREGATION:
        return [
            (agg.value, {"aggregation": agg.value}, _with(cfg, gaa=replace(cfg.gaa, aggregation=agg)))
            for agg in (Aggregation.ATTENTION, Aggregation.AFFINITY)
        ]
    if which is AblationName.LOF_DIM:
        return [
            (f"lof_dim_{d}", {"lof_dim": d}, _with(cfg, lof=replace(cfg.lof, lof_dim=d)))
            for d in cfg.ablation.lof_dims
        ]
    if which is AblationName.LABEL_CURVE:
        return [("default", {}, cfg)]
    if which is AblationName.LAMBDA:
        return [
            (f"lambda_{lam:g}", {"lambda": lam}, _with(cfg, adapt=replace(cfg.adapt, lam=lam)))
            for lam in cfg.ablation.lambdas
        ]
    if which is AblationName.BASELINE:
        source_only = _with(
            cfg,
            adapt=replace(cfg.adapt, lam=0.0),
            lof=replace(cfg.lof, threshold=math.inf),
        )
        return [
            ("degaa", {"lambda": cfg.adapt.lam, "lof_threshold": cfg.lof.threshold}, cfg),
            ("source_only", {"lambda": 0.0, "lof_threshold": math.inf}, source_only),
        ]
    if which is AblationName.UNKNOWN_RATIO:
        return [
            (f"private_{c}", {"private_classes": c}, _with(cfg, data=replace(cfg.data, private_classes=c)))
            for c in cfg.ablation.unknown_counts
        ]
    # settings: explicit domain specs only fit one (n, m), so each setting uses generated specs
    return [
        (f"{n}S{m}T", {"n_sources": n, "n_targets": m},
         _with(cfg, data=replace(cfg.data, n_sources=n, n_targets=m, domain_specs=None)))
        for n, m in cfg.ablation.settings
    ]


def run_ablation(
    cfg: RunConfig,
    which: AblationName,
    out_dir: Path,
    log_callback: Optional[LogCallback] = None,
    progress_callback: Optional[ProgressCallback] = None,
    cancel_check: Optional[Callable[[], None]] = None,
) -> AblationReport:
    which = AblationName(which)
    root = Path(out_dir) / f"ablation_{which.value}"
    variants = build_variants(cfg, which)
    report = AblationReport(which=which)

    def _log(message: str) -> None:
        text = f"[ABLATE] {message}"
        logger.info(text)
        if log_callback:
            log_callback(text)

    param_keys: List[str] = []
    for name, params, _ in variants:
        param_keys.extend(k for k in params if k not in param_keys)

    curve_rows: List[List[Any]] = []
    for index, (name, params, variant_cfg) in enumerate(variants, start=1):
        if cancel_check:
            cancel_check()
        _log(f"{which.value}: variant {index}/{len(variants)} {name}")
        engine = PipelineEngine(
            variant_cfg,
            root / name,
            log_callback=log_callback,
            progress_callback=progress_callback,
        )
        result = engine.run_pipeline()
        metrics = result.metrics or {}
        report.rows.append(
            {
                "variant": name,
                **{k: params.get(k) for k in param_keys},
                "seed": variant_cfg.seed,
                "os": metrics.get("os"),
                "os_star": metrics.get("os_star"),
                "unknown_recall": metrics.get("unknown_recall"),
                "pseudo_label_accuracy": metrics.get("pseudo_label_accuracy"),
            }
        )
        if which is AblationName.LABEL_CURVE:
            for row in engine.store.read_csv(REFRESH_LOG):
                curve_rows.append([
                    name, row["refresh"], row["iter"], row["pseudo_acc"], row["unknown_recall"], row["set_pseudo_acc"],
                ])

    store = ArtifactStore(root, config_hash(cfg), cfg.seed)
    columns = ["variant", *param_keys, "seed", "os", "os_star", "unknown_recall", "pseudo_label_accuracy"]
    report.report_path = store.write_csv("report.csv", columns, ([row[c] for c in columns] for row in report.rows))
    if which is AblationName.LABEL_CURVE:
        report.curve_path = store.write_csv(
            "label_curve.csv", ["variant", "refresh", "iter", "pseudo_acc", "unknown_recall", "set_pseudo_acc"], curve_rows
        )
    _log(f"{which.value}: report written to {report.report_path}")
    return report
