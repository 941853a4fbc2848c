from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..artifacts import BACKBONE, WARMUP_LOG, ArtifactStore
from ..backbone import Backbone, compute_centroids, source_accuracy, warmup_train
from ..config import RunConfig
from ..numcore import make_rng
from .common import CancelCheck, centroids_payload, load_bundle, load_table


@dataclass
class WarmupStats:
    steps: int = 0
    final_loss: Optional[float] = None
    source_accuracy: float = 0.0
    files_written: int = 0


def run(cfg: RunConfig, store: ArtifactStore, cancel_check: CancelCheck = None) -> WarmupStats:
    bundle = load_bundle(store)
    table = load_table(store, cfg)
    rng = make_rng(cfg.seed, "warmup")
    wc = cfg.warmup
    net = Backbone(
        bundle.in_dim,
        cfg.embed.d_e_dim,
        bundle.shared_classes,
        rng,
        hidden=wc.hidden,
        feat_dim=wc.feat_dim,
        combine_mode=wc.combine_mode,
    )
    log = warmup_train(
        bundle,
        table,
        net,
        wc.optim.sgd(wc.steps),
        wc.steps,
        wc.batch_size,
        rng,
        cancel_check=cancel_check,
    )
    centroids = compute_centroids(bundle, table, net)
    accuracy = source_accuracy(bundle, table, net)

    store.write_json(
        BACKBONE,
        {
            "network": net.to_payload(),
            "centroids": centroids_payload(centroids),
            "source_accuracy": accuracy,
        },
    )
    store.write_csv(
        WARMUP_LOG,
        ["step", "loss", "lr", "batch_accuracy"],
        (
            [i, loss, lr, acc]
            for i, (loss, lr, acc) in enumerate(zip(log.losses, log.learning_rates, log.batch_accuracy))
        ),
    )
    return WarmupStats(
        steps=len(log.losses),
        final_loss=log.losses[-1] if log.losses else None,
        source_accuracy=accuracy,
        files_written=2,
    )
