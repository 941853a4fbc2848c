"""
Graph attentional aggregation.

Every sample in a batch is a node. Layers alternate between intra-role edges
(odd layers, 1-based) and inter-role edges (even layers). A layer computes a
multi-head attention message per node over its active in-edges, merges the
heads with a square matrix, and adds ``update_mlp([x | m])`` to ``x``. A
shared linear classifier maps the final node features to shared-class logits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .datagen import Role
from .errors import ContractError, DegaaConfigError, DimensionError
from .numcore import Linear, Mlp, Module, Tensor, load_state_payload, ops, state_payload


class EdgeMode(str, Enum):
    SELF = "self"
    CROSS = "cross"


class Aggregation(str, Enum):
    ATTENTION = "attention"
    AFFINITY = "affinity"


@dataclass
class GraphBatch:
    """Node features (row i is node i) with the role and domain of each node."""
    features: Tensor
    roles: np.ndarray
    domain_ids: np.ndarray

    def __post_init__(self) -> None:
        if not isinstance(self.features, Tensor):
            self.features = Tensor(self.features)
        self.roles = np.asarray([Role(r).value for r in self.roles], dtype=object)
        self.domain_ids = np.asarray(self.domain_ids, dtype=np.int64)
        n = self.features.shape[0]
        if self.features.data.ndim != 2 or self.roles.shape[0] != n or self.domain_ids.shape[0] != n:
            raise DimensionError(
                f"GraphBatch: features {self.features.shape}, {self.roles.shape[0]} roles, "
                f"{self.domain_ids.shape[0]} domain ids"
            )

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_source(self) -> int:
        return int((self.roles == Role.SOURCE.value).sum())

    @property
    def n_target(self) -> int:
        return int((self.roles == Role.TARGET.value).sum())

    def with_features(self, features: Tensor) -> "GraphBatch":
        return GraphBatch(features, self.roles, self.domain_ids)

    def permuted(self, order: Sequence[int]) -> "GraphBatch":
        idx = np.asarray(order, dtype=np.int64)
        return GraphBatch(Tensor(self.features.data[idx]), self.roles[idx], self.domain_ids[idx])


def edge_mode_for_layer(index: int) -> EdgeMode:
    """1-based layer index: odd layers are intra-role, even layers inter-role."""
    if index < 1:
        raise ContractError(f"layer index is 1-based, got {index}")
    return EdgeMode.SELF if index % 2 == 1 else EdgeMode.CROSS


def edge_mask(batch: GraphBatch, mode: EdgeMode, strict_intra: bool = False) -> np.ndarray:
    """``mask[i, j]`` is true iff node i receives from node j."""
    same_role = batch.roles[:, None] == batch.roles[None, :]
    if EdgeMode(mode) is EdgeMode.CROSS:
        return ~same_role
    mask = same_role & ~np.eye(len(batch), dtype=bool)
    if strict_intra:
        mask &= batch.domain_ids[:, None] != batch.domain_ids[None, :]
    return mask


def edge_set(batch: GraphBatch, mode: EdgeMode, strict_intra: bool = False) -> List[Tuple[int, int]]:
    rows, cols = np.nonzero(edge_mask(batch, mode, strict_intra))
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


# ---------------------------------------------------------------------- #
# Network
# ---------------------------------------------------------------------- #
class GaaLayer(Module):
    def __init__(
        self,
        feat_dim: int,
        heads: int,
        index: int,
        rng: np.random.Generator,
        aggregation: Aggregation = Aggregation.ATTENTION,
        scaled: bool = False,
    ) -> None:
        super().__init__()
        if heads < 1 or feat_dim % heads:
            raise DimensionError(f"feat_dim {feat_dim} is not divisible by {heads} heads")
        self.feat_dim = int(feat_dim)
        self.heads = int(heads)
        self.head_dim = feat_dim // heads
        self.index = int(index)
        self.edge_mode = edge_mode_for_layer(index)
        self.aggregation = Aggregation(aggregation)
        self.scaled = bool(scaled)
        self.query: List[Linear] = []
        self.key: List[Linear] = []
        self.value: List[Linear] = []
        self.merge: Optional[Tensor] = None
        if self.aggregation is Aggregation.ATTENTION:
            for t in range(heads):
                self.query.append(self.add_module(f"q{t}", Linear(feat_dim, self.head_dim, rng)))
                self.key.append(self.add_module(f"k{t}", Linear(feat_dim, self.head_dim, rng)))
                self.value.append(self.add_module(f"v{t}", Linear(feat_dim, self.head_dim, rng)))
            self.merge = self.add_param("merge", rng.normal(0.0, math.sqrt(1.0 / feat_dim), size=(feat_dim, feat_dim)))
        self.update_mlp: Mlp = self.add_module("update", Mlp([2 * feat_dim, feat_dim, feat_dim], rng, zero_last=True))


class GaaNetwork(Module):
    def __init__(
        self,
        feat_dim: int,
        num_classes: int,
        rng: np.random.Generator,
        layers: int = 3,
        heads: int = 2,
        aggregation: Aggregation = Aggregation.ATTENTION,
        scaled_attention: bool = False,
        strict_intra: bool = False,
    ) -> None:
        super().__init__()
        if layers < 1:
            raise DegaaConfigError(f"gaa.layers must be >= 1, got {layers}")
        self.feat_dim = int(feat_dim)
        self.num_classes = int(num_classes)
        self.heads = int(heads)
        self.aggregation = Aggregation(aggregation)
        self.scaled_attention = bool(scaled_attention)
        self.strict_intra = bool(strict_intra)
        self.layers: List[GaaLayer] = [
            self.add_module(
                f"layer{i}",
                GaaLayer(feat_dim, heads, i, rng, aggregation=self.aggregation, scaled=scaled_attention),
            )
            for i in range(1, layers + 1)
        ]
        self.classifier: Linear = self.add_module("classifier", Linear(feat_dim, num_classes, rng))

    def to_payload(self) -> Dict[str, object]:
        return {
            "kind": "gaa",
            "feat_dim": self.feat_dim,
            "num_classes": self.num_classes,
            "layers": len(self.layers),
            "heads": self.heads,
            "aggregation": self.aggregation.value,
            "scaled_attention": self.scaled_attention,
            "strict_intra": self.strict_intra,
            **state_payload(self),
        }

    @classmethod
    def from_payload(cls, payload: Mapping[str, object]) -> "GaaNetwork":
        net = cls(
            int(payload["feat_dim"]),
            int(payload["num_classes"]),
            np.random.default_rng(0),
            layers=int(payload["layers"]),
            heads=int(payload["heads"]),
            aggregation=Aggregation(payload["aggregation"]),
            scaled_attention=bool(payload["scaled_attention"]),
            strict_intra=bool(payload["strict_intra"]),
        )
        load_state_payload(net, dict(payload))
        return net


# ---------------------------------------------------------------------- #
# Forward
# ---------------------------------------------------------------------- #
@dataclass
class GaaOutput:
    features: Tensor
    logits: Tensor
    probs: Tensor
    # attention[l][t] holds the weights of head t in layer l+1; empty in affinity mode
    attention: List[List[np.ndarray]] = field(default_factory=list)


def _check_features(batch: GraphBatch, feat_dim: int) -> None:
    if batch.features.shape[1] != feat_dim:
        raise DimensionError(f"GAA expects {feat_dim} node features, got {batch.features.shape[1]}")


def attention_message(
    batch: GraphBatch,
    layer: GaaLayer,
    head: int,
    strict_intra: bool = False,
) -> Tuple[Tensor, np.ndarray]:
    """Message of one head and its attention weights; nodes without in-edges get zeros."""
    if layer.aggregation is not Aggregation.ATTENTION:
        raise ContractError("attention_message on an affinity layer")
    _check_features(batch, layer.feat_dim)
    x = batch.features
    q = layer.query[head](x)
    k = layer.key[head](x)
    v = layer.value[head](x)
    scores = ops.matmul(q, ops.transpose(k))
    if layer.scaled:
        scores = ops.scale(scores, 1.0 / math.sqrt(layer.head_dim))
    alpha = ops.masked_softmax_rows(scores, edge_mask(batch, layer.edge_mode, strict_intra))
    return ops.matmul(alpha, v), alpha.data


def affinity_aggregate(batch: GraphBatch, mode: EdgeMode, strict_intra: bool = False, eps: float = 1e-12) -> Tensor:
    """Message as a row-softmax of cosine similarity over the active edges, applied to raw features."""
    x = batch.features
    unit = ops.l2_normalize_rows(x, eps)
    sim = ops.matmul(unit, ops.transpose(unit))
    weights = ops.masked_softmax_rows(sim, edge_mask(batch, mode, strict_intra))
    return ops.matmul(weights, x)


def layer_forward(
    batch: GraphBatch,
    layer: GaaLayer,
    strict_intra: bool = False,
    attention_out: Optional[List[np.ndarray]] = None,
) -> Tensor:
    _check_features(batch, layer.feat_dim)
    x = batch.features
    if layer.aggregation is Aggregation.AFFINITY:
        message = affinity_aggregate(batch, layer.edge_mode, strict_intra)
    else:
        parts = []
        for t in range(layer.heads):
            msg, alpha = attention_message(batch, layer, t, strict_intra)
            parts.append(msg)
            if attention_out is not None:
                attention_out.append(alpha)
        stacked = parts[0] if len(parts) == 1 else ops.concat_cols(parts)
        message = ops.matmul(stacked, layer.merge)
    update = layer.update_mlp(ops.concat_cols([x, message]))
    return ops.add(x, update)


def gaa_forward(batch: GraphBatch, net: GaaNetwork, allow_empty_role: bool = False) -> GaaOutput:
    """
    Run every layer and the classifier.

    With more than one layer both roles must be present, otherwise the
    inter-role layers have no edges; ``allow_empty_role`` accepts that and
    lets those layers pass zero messages.
    """
    _check_features(batch, net.feat_dim)
    if len(net.layers) >= 2 and not allow_empty_role and (batch.n_source == 0 or batch.n_target == 0):
        raise ContractError(
            f"GAA with {len(net.layers)} layers needs source and target nodes, "
            f"got {batch.n_source} and {batch.n_target}"
        )
    attention: List[List[np.ndarray]] = []
    current = batch
    for layer in net.layers:
        weights: List[np.ndarray] = []
        current = current.with_features(layer_forward(current, layer, net.strict_intra, weights))
        attention.append(weights)
    logits = net.classifier(current.features)
    return GaaOutput(current.features, logits, ops.softmax_rows(logits), attention)
