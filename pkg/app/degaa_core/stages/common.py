from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..artifacts import BACKBONE, BUNDLE, EMBEDDING_TABLE, ArtifactStore
from ..backbone import Backbone, Centroids, neutral_table
from ..config import RunConfig
from ..datagen import DatasetBundle, bundle_from_text
from ..domain_embed import DomainEmbeddingTable
from ..numcore import make_rng
from ..openset import make_lof_projection

CancelCheck = Optional[Callable[[], None]]
WarnCallback = Optional[Callable[[str], None]]


def load_bundle(store: ArtifactStore) -> DatasetBundle:
    return bundle_from_text(store.path(BUNDLE).read_text(encoding="utf-8"))


def load_table(store: ArtifactStore, cfg: RunConfig) -> DomainEmbeddingTable:
    """The stored table, or its information-free stand-in when domain embeddings are switched off."""
    table = DomainEmbeddingTable.from_dict(store.read_json(EMBEDDING_TABLE)["vectors"])
    if cfg.warmup.use_domain_embedding:
        return table
    return neutral_table(table, cfg.warmup.combine_mode)


def load_backbone(store: ArtifactStore, name: str = BACKBONE) -> Backbone:
    return Backbone.from_payload(store.read_json(name)["network"])


def load_centroids(store: ArtifactStore, name: str = BACKBONE) -> Centroids:
    raw = store.read_json(name)["centroids"]
    return Centroids(classes=np.asarray(raw["classes"], dtype=np.int64), matrix=np.asarray(raw["matrix"], dtype=np.float64))


def centroids_payload(centroids: Centroids) -> dict:
    return {
        "classes": [int(c) for c in centroids.classes],
        "matrix": [[float(v) for v in row] for row in centroids.matrix],
    }


def lof_projection(cfg: RunConfig) -> Optional[np.ndarray]:
    """Same projection for every stage that runs LOF under one seed."""
    return make_lof_projection(cfg.warmup.feat_dim, cfg.lof.lof_dim, make_rng(cfg.seed, "lof_projection"))
