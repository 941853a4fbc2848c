from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..adapt import run_adaptation
from ..artifacts import ADAPT_LOG, ADAPTED_BACKBONE, GAA, REFRESH_LOG, ArtifactStore
from ..backbone import compute_centroids
from ..config import RunConfig
from ..gaa import GaaNetwork
from ..numcore import make_rng
from .common import CancelCheck, centroids_payload, lof_projection, load_backbone, load_bundle, load_centroids, load_table


@dataclass
class AdaptStats:
    steps: int = 0
    refreshes: int = 0
    final_loss: Optional[float] = None
    first_pseudo_acc: Optional[float] = None
    final_pseudo_acc: Optional[float] = None
    files_written: int = 0


def run(cfg: RunConfig, store: ArtifactStore, cancel_check: CancelCheck = None) -> AdaptStats:
    bundle = load_bundle(store)
    table = load_table(store, cfg)
    backbone = load_backbone(store)
    centroids = load_centroids(store)
    rng = make_rng(cfg.seed, "adapt")
    gaa_net = GaaNetwork(
        backbone.feat_dim,
        bundle.shared_classes,
        rng,
        layers=cfg.gaa.layers,
        heads=cfg.gaa.heads,
        aggregation=cfg.gaa.aggregation,
        scaled_attention=cfg.gaa.scaled_attention,
        strict_intra=cfg.gaa.strict_intra,
    )
    adapt_cfg = cfg.adapt.adapt_config()
    log = run_adaptation(
        bundle,
        table,
        backbone,
        centroids,
        gaa_net,
        adapt_cfg,
        cfg.adapt.optim.sgd(adapt_cfg.total_steps),
        rng,
        cfg.lof,
        projection=lof_projection(cfg),
        cancel_check=cancel_check,
    )
    curve = log.set_accuracy_curve()
    first = curve[0] if curve else None
    final = curve[-1] if curve else None

    store.write_json(
        ADAPTED_BACKBONE,
        {"network": backbone.to_payload(), "centroids": centroids_payload(compute_centroids(bundle, table, backbone))},
    )
    store.write_json(
        GAA,
        {"network": gaa_net.to_payload(), "first_pseudo_acc": first, "final_pseudo_acc": final},
    )
    store.write_csv(
        ADAPT_LOG,
        ["iter", "loss", "lr", "pseudo_acc", "unknown_recall"],
        ([s.iter, s.loss, s.lr, s.pseudo_acc, s.unknown_recall] for s in log.steps),
    )
    store.write_csv(
        REFRESH_LOG,
        ["refresh", "iter", "known", "unknown", "pseudo_acc", "unknown_recall", "set_pseudo_acc", "set_unknown_recall"],
        (
            [r.refresh, r.iter, r.known, r.unknown, r.pseudo_acc, r.unknown_recall, r.set_pseudo_acc, r.set_unknown_recall]
            for r in log.refreshes
        ),
    )
    return AdaptStats(
        steps=len(log.steps),
        refreshes=len(log.refreshes),
        final_loss=log.steps[-1].loss if log.steps else None,
        first_pseudo_acc=first,
        final_pseudo_acc=final,
        files_written=4,
    )
