"""
Joint adaptation of the feature extractor and the GAA stack, and open-set
evaluation.

Every refresh draws a source and a target batch, re-labels the target batch
(LOF split plus nearest centroid) and then runs K episodes on it with the
loss CE(Y_s_hat, Y_s) + lambda * CE(Y_t_hat, Y_pseudo). Targets flagged
unknown never enter the graph.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import metrics as metrics_mod
from .backbone import Backbone, Centroids, bundle_features, compute_centroids
from .datagen import DatasetBundle, Role, SampleBatch, iterate_batches
from .domain_embed import DomainEmbeddingTable
from .errors import DegaaConfigError
from .gaa import GaaNetwork, GraphBatch, gaa_forward
from .metrics import Metrics
from .numcore import Sgd, SgdConfig, Tensor, backward, ops
from .openset import LofConfig, PseudoLabelSet, pseudo_label, split_known_unknown

logger = logging.getLogger(__name__)


class EvalSourceMode(str, Enum):
    CENTROIDS = "centroids"
    SAMPLES = "samples"


@dataclass(frozen=True)
class AdaptConfig:
    lam: float = 0.5
    refresh_period: int = 50
    iterations: int = 20
    source_batch: int = 32
    target_batch: int = 192
    refresh_centroids: bool = True
    resample_per_episode: bool = False
    eval_source_mode: EvalSourceMode = EvalSourceMode.CENTROIDS

    def __post_init__(self) -> None:
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DegaaConfigError(f"adapt.lambda must be a finite number >= 0, got {self.lam}")
        if self.refresh_period < 1:
            raise DegaaConfigError(f"adapt.K must be >= 1, got {self.refresh_period}")
        if self.iterations < 0:
            raise DegaaConfigError(f"adapt.iterations must be >= 0, got {self.iterations}")
        if self.source_batch < 1 or self.target_batch < 1:
            raise DegaaConfigError(
                f"adapt batch sizes must be >= 1, got {self.source_batch} and {self.target_batch}"
            )

    @property
    def total_steps(self) -> int:
        return self.iterations * self.refresh_period


@dataclass
class StepRecord:
    iter: int
    loss: float
    lr: float
    pseudo_acc: Optional[float]
    unknown_recall: Optional[float]


@dataclass
class RefreshRecord:
    refresh: int
    iter: int
    known: int
    unknown: int
    pseudo_acc: Optional[float]
    unknown_recall: Optional[float]
    # the same two rates over every target point, not just the batch
    set_pseudo_acc: Optional[float] = None
    set_unknown_recall: Optional[float] = None


@dataclass
class AdaptLog:
    steps: List[StepRecord] = field(default_factory=list)
    refreshes: List[RefreshRecord] = field(default_factory=list)

    def pseudo_accuracy_curve(self) -> List[Optional[float]]:
        return [r.pseudo_acc for r in self.refreshes]

    def set_accuracy_curve(self) -> List[Optional[float]]:
        return [r.set_pseudo_acc for r in self.refreshes]


def trainable_parameters(backbone: Backbone, gaa_net: GaaNetwork) -> List[Tensor]:
    """theta of the feature extractor plus every GAA parameter; the warm-up head stays frozen."""
    return backbone.theta() + gaa_net.parameters()


def adaptation_loss(
    source_batch: SampleBatch,
    target_batch: SampleBatch,
    pseudo: PseudoLabelSet,
    backbone: Backbone,
    gaa_net: GaaNetwork,
    table: DomainEmbeddingTable,
    lam: float,
) -> Tensor:
    src_feat = backbone.features(Tensor(source_batch.x), Tensor(table.lookup(source_batch.domain_ids)))
    known = pseudo.known_indices
    n_src = len(source_batch)
    parts = [src_feat]
    roles = [Role.SOURCE.value] * n_src
    domains = list(source_batch.domain_ids)
    if known.size:
        tgt_x = target_batch.x[known]
        tgt_dom = target_batch.domain_ids[known]
        parts.append(backbone.features(Tensor(tgt_x), Tensor(table.lookup(tgt_dom))))
        roles += [Role.TARGET.value] * known.size
        domains += list(tgt_dom)
    nodes = parts[0] if len(parts) == 1 else ops.concat_rows(parts)

    out = gaa_forward(GraphBatch(nodes, np.asarray(roles, dtype=object), np.asarray(domains)), gaa_net, allow_empty_role=True)
    source_probs = ops.take_rows(out.probs, np.arange(n_src))
    loss = ops.cross_entropy(source_probs, source_batch.labels)
    if lam > 0 and known.size:
        target_probs = ops.take_rows(out.probs, np.arange(n_src, n_src + known.size))
        loss = ops.add(loss, ops.scale(ops.cross_entropy(target_probs, pseudo.labels), lam))
    return loss


def adaptation_step(
    source_batch: SampleBatch,
    target_batch: SampleBatch,
    pseudo: PseudoLabelSet,
    backbone: Backbone,
    gaa_net: GaaNetwork,
    table: DomainEmbeddingTable,
    cfg: AdaptConfig,
    optimizer: Sgd,
) -> Tuple[float, float]:
    """One SGD update of theta and the GAA parameters; returns (loss, lr)."""
    loss = adaptation_loss(source_batch, target_batch, pseudo, backbone, gaa_net, table, cfg.lam)
    lr = optimizer.step(backward(loss))
    return loss.item(), lr


def label_target_batch(
    bundle: DatasetBundle,
    target_batch: SampleBatch,
    backbone: Backbone,
    table: DomainEmbeddingTable,
    centroids: Centroids,
    lof_cfg: LofConfig,
    projection: Optional[np.ndarray] = None,
) -> PseudoLabelSet:
    feats = bundle_features(bundle, target_batch.indices, table, backbone)
    return pseudo_label(feats, centroids, lof_cfg, projection)


def target_set_quality(
    bundle: DatasetBundle,
    backbone: Backbone,
    table: DomainEmbeddingTable,
    centroids: Centroids,
    lof_cfg: LofConfig,
    projection: Optional[np.ndarray] = None,
) -> Tuple[Optional[float], Optional[float]]:
    """Pseudo-label accuracy and unknown recall when every target point is labelled at once."""
    idx = bundle.role_indices(Role.TARGET)
    if idx.size < 2:
        return None, None
    pseudo = pseudo_label(bundle_features(bundle, idx, table, backbone), centroids, lof_cfg, projection)
    return metrics_mod.refresh_quality(bundle, idx, pseudo.known_indices, pseudo.labels, pseudo.unknown_indices)


def run_adaptation(
    bundle: DatasetBundle,
    table: DomainEmbeddingTable,
    backbone: Backbone,
    centroids: Centroids,
    gaa_net: GaaNetwork,
    cfg: AdaptConfig,
    sgd: SgdConfig,
    rng: np.random.Generator,
    lof_cfg: LofConfig,
    projection: Optional[np.ndarray] = None,
    on_refresh: Optional[Callable[[RefreshRecord], None]] = None,
    cancel_check: Optional[Callable[[], None]] = None,
) -> AdaptLog:
    log = AdaptLog()
    if cfg.iterations == 0:
        return log
    if cfg.refresh_centroids:
        logger.info("centroids are recomputed from the current extractor at every refresh")
    optimizer = Sgd(trainable_parameters(backbone, gaa_net), sgd)
    sources = iterate_batches(bundle, Role.SOURCE, cfg.source_batch, rng, drop_last=True)
    targets = iterate_batches(bundle, Role.TARGET, cfg.target_batch, rng, drop_last=True)
    step = 0
    for refresh in range(cfg.iterations):
        if cancel_check:
            cancel_check()
        target_batch = next(targets)
        source_batch = next(sources)
        if cfg.refresh_centroids:
            centroids = compute_centroids(bundle, table, backbone)
        pseudo = label_target_batch(bundle, target_batch, backbone, table, centroids, lof_cfg, projection)

        pseudo_acc, recall = metrics_mod.refresh_quality(
            bundle, target_batch.indices, pseudo.known_indices, pseudo.labels, pseudo.unknown_indices
        )
        set_acc, set_recall = target_set_quality(bundle, backbone, table, centroids, lof_cfg, projection)
        record = RefreshRecord(
            refresh=refresh,
            iter=step,
            known=int(pseudo.known_indices.size),
            unknown=int(pseudo.unknown_indices.size),
            pseudo_acc=pseudo_acc,
            unknown_recall=recall,
            set_pseudo_acc=set_acc,
            set_unknown_recall=set_recall,
        )
        log.refreshes.append(record)
        logger.info(
            "refresh %d: %d known, %d unknown, pseudo_acc=%s, target-set pseudo_acc=%s",
            refresh, record.known, record.unknown, record.pseudo_acc, record.set_pseudo_acc,
        )
        if on_refresh:
            on_refresh(record)

        for episode in range(cfg.refresh_period):
            if episode and cfg.resample_per_episode:
                source_batch = next(sources)
            loss, lr = adaptation_step(source_batch, target_batch, pseudo, backbone, gaa_net, table, cfg, optimizer)
            log.steps.append(StepRecord(step, loss, lr, record.pseudo_acc, record.unknown_recall))
            logger.debug("adapt step %d loss=%.6f lr=%.6f", step, loss, lr)
            step += 1
    return log


# ---------------------------------------------------------------------- #
# Evaluation
# ---------------------------------------------------------------------- #
@dataclass
class Evaluation:
    metrics: Metrics
    predictions: np.ndarray
    lof_scores: np.ndarray


def evaluate(
    bundle: DatasetBundle,
    backbone: Backbone,
    gaa_net: GaaNetwork,
    table: DomainEmbeddingTable,
    lof_cfg: LofConfig,
    centroids: Optional[Centroids] = None,
    projection: Optional[np.ndarray] = None,
    source_mode: EvalSourceMode = EvalSourceMode.CENTROIDS,
    rng: Optional[np.random.Generator] = None,
    source_batch: int = 32,
) -> Evaluation:
    """
    Predict every target sample: LOF over the whole target feature set marks
    unknowns, the rest are classified by GAA next to source nodes (class
    centroids by default, or a sampled source batch).
    """
    tgt_idx = bundle.role_indices(Role.TARGET)
    feats = bundle_features(bundle, tgt_idx, table, backbone)
    known, _, scores = split_known_unknown(feats, lof_cfg, projection)
    pred = np.full(tgt_idx.size, bundle.unknown_id, dtype=np.int64)

    if known.size:
        if EvalSourceMode(source_mode) is EvalSourceMode.SAMPLES:
            if rng is None:
                raise DegaaConfigError("eval_source_mode=samples needs a generator")
            src_idx = next(iterate_batches(bundle, Role.SOURCE, source_batch, rng))
            src_feat = bundle_features(bundle, src_idx.indices, table, backbone)
            src_dom = src_idx.domain_ids
        else:
            if centroids is None:
                centroids = compute_centroids(bundle, table, backbone)
            src_feat = centroids.matrix
            src_dom = np.full(len(centroids), -1)
        nodes = np.concatenate([src_feat, feats[known]])
        roles = np.asarray([Role.SOURCE.value] * src_feat.shape[0] + [Role.TARGET.value] * known.size, dtype=object)
        domains = np.concatenate([src_dom, bundle.domain_ids[tgt_idx[known]]])
        out = gaa_forward(GraphBatch(Tensor(nodes), roles, domains), gaa_net)
        pred[known] = out.logits.data[src_feat.shape[0]:].argmax(axis=1)

    result = metrics_mod.target_metrics(bundle, tgt_idx, pred)
    return Evaluation(metrics=result, predictions=pred, lof_scores=scores)
