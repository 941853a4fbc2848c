"""
Feature extractor F(x; theta), its warm-up training on source data and the
per-class source centroids.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .datagen import DatasetBundle, Role, iterate_batches
from .domain_embed import DomainEmbeddingTable
from .errors import ContractError, DimensionError
from .numcore import Linear, Mlp, Module, Sgd, SgdConfig, Tensor, backward, load_state_payload, ops, state_payload

logger = logging.getLogger(__name__)


class CombineMode(str, Enum):
    CONCAT = "concat"
    ELEMENTWISE_MUL = "elementwise_mul"


class Backbone(Module):
    """
    MLP over the input combined with its domain embedding, plus a linear
    warm-up head over the shared classes.

    ``concat`` feeds ``[x | d_e]``; ``elementwise_mul`` feeds ``x * d_e`` and
    needs ``in_dim == d_e_dim``.
    """

    def __init__(
        self,
        in_dim: int,
        d_e_dim: int,
        num_classes: int,
        rng: np.random.Generator,
        hidden: Sequence[int] = (64, 64),
        feat_dim: int = 32,
        combine_mode: CombineMode = CombineMode.CONCAT,
    ) -> None:
        super().__init__()
        self.combine_mode = CombineMode(combine_mode)
        if self.combine_mode is CombineMode.ELEMENTWISE_MUL and in_dim != d_e_dim:
            raise DimensionError(
                f"combine_mode=elementwise_mul needs in_dim == d_e_dim, got {in_dim} and {d_e_dim}"
            )
        self.in_dim = int(in_dim)
        self.d_e_dim = int(d_e_dim)
        self.num_classes = int(num_classes)
        self.hidden = [int(h) for h in hidden]
        self.feat_dim = int(feat_dim)
        mlp_in = in_dim + d_e_dim if self.combine_mode is CombineMode.CONCAT else in_dim
        self.mlp: Mlp = self.add_module("mlp", Mlp([mlp_in, *self.hidden, feat_dim], rng))
        self.head: Linear = self.add_module("head", Linear(feat_dim, num_classes, rng))

    # ------------------------------------------------------------------ #
    def combine(self, x: Tensor, d_e: Tensor) -> Tensor:
        if x.data.ndim != 2 or d_e.data.ndim != 2 or x.shape[0] != d_e.shape[0]:
            raise DimensionError(f"combine_mode={self.combine_mode.value}: x {x.shape} vs d_e {d_e.shape}")
        if x.shape[1] != self.in_dim or d_e.shape[1] != self.d_e_dim:
            raise DimensionError(
                f"combine_mode={self.combine_mode.value}: expected x (*, {self.in_dim}) and "
                f"d_e (*, {self.d_e_dim}), got {x.shape} and {d_e.shape}"
            )
        if self.combine_mode is CombineMode.CONCAT:
            return ops.concat_cols([x, d_e])
        return ops.elementwise_mul(x, d_e)

    def features(self, x: Tensor, d_e: Tensor) -> Tensor:
        return self.mlp(self.combine(x, d_e))

    def logits(self, features: Tensor) -> Tensor:
        return self.head(features)

    def theta(self) -> List[Tensor]:
        """Feature-extractor parameters, without the warm-up head."""
        return self.mlp.parameters()

    # ------------------------------------------------------------------ #
    def to_payload(self) -> Dict[str, object]:
        return {
            "kind": "backbone",
            "in_dim": self.in_dim,
            "d_e_dim": self.d_e_dim,
            "num_classes": self.num_classes,
            "hidden": list(self.hidden),
            "feat_dim": self.feat_dim,
            "combine_mode": self.combine_mode.value,
            **state_payload(self),
        }

    @classmethod
    def from_payload(cls, payload: Mapping[str, object]) -> "Backbone":
        net = cls(
            int(payload["in_dim"]),
            int(payload["d_e_dim"]),
            int(payload["num_classes"]),
            np.random.default_rng(0),
            hidden=[int(h) for h in payload["hidden"]],
            feat_dim=int(payload["feat_dim"]),
            combine_mode=CombineMode(payload["combine_mode"]),
        )
        load_state_payload(net, dict(payload))
        return net


def neutral_table(table: DomainEmbeddingTable, mode: CombineMode) -> DomainEmbeddingTable:
    """Embedding table that carries no domain information under ``mode``."""
    if CombineMode(mode) is CombineMode.CONCAT:
        return table.zeros_like()
    return DomainEmbeddingTable({d: np.ones_like(v) for d, v in table.vectors.items()})


def extract(x: np.ndarray, d_e: np.ndarray, net: Backbone) -> np.ndarray:
    """Features for one vector or a row-stack of vectors."""
    single = np.ndim(x) == 1
    xs = np.atleast_2d(np.asarray(x, dtype=np.float64))
    ds = np.atleast_2d(np.asarray(d_e, dtype=np.float64))
    if ds.shape[0] == 1 and xs.shape[0] > 1:
        ds = np.repeat(ds, xs.shape[0], axis=0)
    out = net.features(Tensor(xs), Tensor(ds)).data
    return out[0] if single else out


def bundle_features(bundle: DatasetBundle, indices: np.ndarray, table: DomainEmbeddingTable, net: Backbone) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return np.zeros((0, net.feat_dim))
    return extract(bundle.x[idx], table.lookup(bundle.domain_ids[idx]), net)


# ---------------------------------------------------------------------- #
# Warm-up
# ---------------------------------------------------------------------- #
@dataclass
class WarmupLog:
    losses: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)
    batch_accuracy: List[float] = field(default_factory=list)


def warmup_loss(bundle: DatasetBundle, indices: np.ndarray, table: DomainEmbeddingTable, net: Backbone) -> Tuple[Tensor, np.ndarray]:
    """Cross-entropy of the warm-up head on a source batch; also returns the probabilities."""
    idx = np.asarray(indices, dtype=np.int64)
    labels = bundle.labels[idx]
    if np.any(labels < 0):
        raise ContractError("warm-up batch contains unlabelled rows")
    d_e = Tensor(table.lookup(bundle.domain_ids[idx]))
    probs = ops.softmax_rows(net.logits(net.features(Tensor(bundle.x[idx]), d_e)))
    return ops.cross_entropy(probs, labels), probs.data


def warmup_train(
    bundle: DatasetBundle,
    table: DomainEmbeddingTable,
    net: Backbone,
    sgd: SgdConfig,
    steps: int,
    batch_size: int,
    rng: np.random.Generator,
    on_step: Optional[Callable[[int, float], None]] = None,
    cancel_check: Optional[Callable[[], None]] = None,
) -> WarmupLog:
    """Supervised training of theta and the head on source batches; targets are never read."""
    table.lookup(bundle.source_domains)
    log = WarmupLog()
    if steps <= 0:
        return log
    opt = Sgd(net.parameters(), sgd)
    batches = iterate_batches(bundle, Role.SOURCE, batch_size, rng, drop_last=True)
    for step in range(steps):
        if cancel_check:
            cancel_check()
        batch = next(batches)
        loss, probs = warmup_loss(bundle, batch.indices, table, net)
        lr = opt.step(backward(loss))
        value = loss.item()
        log.losses.append(value)
        log.learning_rates.append(lr)
        log.batch_accuracy.append(float(np.mean(probs.argmax(axis=1) == batch.labels)))
        logger.debug("warmup step %d loss=%.6f lr=%.6f", step, value, lr)
        if on_step:
            on_step(step, value)
    return log


def source_accuracy(bundle: DatasetBundle, table: DomainEmbeddingTable, net: Backbone) -> float:
    idx = bundle.role_indices(Role.SOURCE)
    feats = bundle_features(bundle, idx, table, net)
    pred = net.logits(Tensor(feats)).data.argmax(axis=1)
    return float(np.mean(pred == bundle.labels[idx]))


# ---------------------------------------------------------------------- #
# Centroids
# ---------------------------------------------------------------------- #
@dataclass
class Centroids:
    """Row ``c`` of ``matrix`` is the mean source feature of class ``classes[c]``."""
    classes: np.ndarray
    matrix: np.ndarray

    def __len__(self) -> int:
        return int(self.classes.shape[0])

    def as_dict(self) -> Dict[int, np.ndarray]:
        return {int(c): self.matrix[i] for i, c in enumerate(self.classes)}


def compute_centroids(bundle: DatasetBundle, table: DomainEmbeddingTable, net: Backbone) -> Centroids:
    idx = bundle.role_indices(Role.SOURCE)
    feats = bundle_features(bundle, idx, table, net)
    labels = bundle.labels[idx]
    rows = []
    for c in range(bundle.shared_classes):
        members = feats[labels == c]
        if members.shape[0] == 0:
            raise ContractError(f"class {c} has no source samples")
        rows.append(members.mean(axis=0))
    return Centroids(classes=np.arange(bundle.shared_classes), matrix=np.stack(rows))
