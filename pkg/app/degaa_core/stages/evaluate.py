from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..adapt import evaluate
from ..artifacts import ADAPTED_BACKBONE, GAA, METRICS, ArtifactStore
from ..backbone import compute_centroids
from ..config import RunConfig, config_to_dict
from ..gaa import GaaNetwork
from ..numcore import make_rng
from .common import CancelCheck, lof_projection, load_backbone, load_bundle, load_table


@dataclass
class EvalStats:
    os: float = 0.0
    os_star: float = 0.0
    unknown_recall: Optional[float] = None
    files_written: int = 0


def run(cfg: RunConfig, store: ArtifactStore, cancel_check: CancelCheck = None) -> EvalStats:
    if cancel_check:
        cancel_check()
    bundle = load_bundle(store)
    table = load_table(store, cfg)
    backbone = load_backbone(store, ADAPTED_BACKBONE)
    gaa_doc = store.read_json(GAA)
    gaa_net = GaaNetwork.from_payload(gaa_doc["network"])

    result = evaluate(
        bundle,
        backbone,
        gaa_net,
        table,
        cfg.lof,
        centroids=compute_centroids(bundle, table, backbone),
        projection=lof_projection(cfg),
        source_mode=cfg.adapt.eval_source_mode,
        rng=make_rng(cfg.seed, "eval"),
        source_batch=cfg.adapt.source_batch,
    )
    metrics = result.metrics
    metrics.pseudo_label_accuracy = gaa_doc.get("final_pseudo_acc")

    store.write_json(
        METRICS,
        {
            **metrics.to_dict(bundle.unknown_id),
            "first_pseudo_label_accuracy": gaa_doc.get("first_pseudo_acc"),
            "shared_classes": bundle.shared_classes,
            "config": config_to_dict(cfg),
        },
    )
    return EvalStats(os=metrics.os, os_star=metrics.os_star, unknown_recall=metrics.unknown_recall, files_written=1)
