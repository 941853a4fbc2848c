"""
Open-set labelling of target features.

Local Outlier Factor splits a batch into known and unknown points; known
points take the class of their nearest source centroid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .backbone import Centroids
from .errors import ContractError, DegaaConfigError, DimensionError


@dataclass(frozen=True)
class LofConfig:
    k: int = 20
    threshold: float = 1.5
    epsilon: float = 1e-12
    lof_dim: Optional[int] = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise DegaaConfigError(f"lof.k must be >= 1, got {self.k}")
        if not (self.threshold >= 1.0):
            raise DegaaConfigError(f"lof.threshold must be >= 1, got {self.threshold}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise DegaaConfigError(f"lof.epsilon must be a positive finite number, got {self.epsilon}")
        if self.lof_dim is not None and self.lof_dim < 1:
            raise DegaaConfigError(f"lof.lof_dim must be >= 1, got {self.lof_dim}")

    def effective_k(self, n: int) -> int:
        return min(self.k, n - 1)


@dataclass
class PseudoLabelSet:
    known_indices: np.ndarray
    unknown_indices: np.ndarray
    labels: np.ndarray
    lof_scores: np.ndarray

    def __post_init__(self) -> None:
        if self.labels.shape[0] != self.known_indices.shape[0]:
            raise DimensionError(f"{self.labels.shape[0]} labels for {self.known_indices.shape[0]} known points")

    @property
    def size(self) -> int:
        return int(self.lof_scores.shape[0])

    def label_map(self) -> Dict[int, int]:
        return {int(i): int(c) for i, c in zip(self.known_indices, self.labels)}


# ---------------------------------------------------------------------- #
def _distance_matrix(points: np.ndarray) -> np.ndarray:
    n = points.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        diff = points - points[i]
        out[i] = np.sqrt((diff * diff).sum(axis=1))
    return out


def lof_scores(points: np.ndarray, k: int, epsilon: float = 1e-12) -> np.ndarray:
    """
    Local Outlier Factor of every point (Euclidean).

    The k-neighbourhood of p holds every other point within k-distance(p),
    ties included. lrd(p) = 1 / max(mean reach-dist(p, o), epsilon) with
    reach-dist(p, o) = max(k-distance(o), d(p, o)).
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"lof_scores expects a 2-D point array, got shape {x.shape}")
    n = x.shape[0]
    if k < 1:
        raise ContractError(f"lof_scores needs k >= 1, got {k}")
    if n < k + 1:
        raise ContractError(f"lof_scores needs at least k+1={k + 1} points, got {n}")

    dist = _distance_matrix(x)
    others = dist.copy()
    np.fill_diagonal(others, np.inf)
    k_distance = np.sort(others, axis=1)[:, k - 1]
    neighbours = others <= k_distance[:, None]

    reach = np.maximum(k_distance[None, :], dist)
    mean_reach = np.where(neighbours, reach, 0.0).sum(axis=1) / neighbours.sum(axis=1)
    lrd = 1.0 / np.maximum(mean_reach, epsilon)
    ratio = np.where(neighbours, lrd[None, :], 0.0).sum(axis=1) / neighbours.sum(axis=1)
    return ratio / lrd


def make_lof_projection(feat_dim: int, lof_dim: Optional[int], rng: np.random.Generator) -> Optional[np.ndarray]:
    """Fixed Gaussian map feat_dim -> lof_dim applied before LOF; None keeps features as they are."""
    if lof_dim is None:
        return None
    return rng.normal(0.0, math.sqrt(1.0 / lof_dim), size=(feat_dim, lof_dim))


def project(points: np.ndarray, projection: Optional[np.ndarray]) -> np.ndarray:
    if projection is None:
        return np.asarray(points, dtype=np.float64)
    if points.shape[1] != projection.shape[0]:
        raise DimensionError(f"LOF projection expects {projection.shape[0]} features, got {points.shape[1]}")
    return points @ projection


def split_known_unknown(
    points: np.ndarray,
    cfg: LofConfig,
    projection: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index i is unknown iff its LOF score exceeds ``cfg.threshold``."""
    x = project(np.atleast_2d(np.asarray(points, dtype=np.float64)), projection)
    n = x.shape[0]
    if n < 2:
        raise ContractError(f"LOF needs at least 2 points, got {n}")
    scores = lof_scores(x, cfg.effective_k(n), cfg.epsilon)
    flagged = scores > cfg.threshold
    return np.flatnonzero(~flagged), np.flatnonzero(flagged), scores


def assign_pseudo_labels(known_points: np.ndarray, centroids: Centroids) -> np.ndarray:
    """Nearest centroid by Euclidean distance; ties go to the smallest class id."""
    if len(centroids) == 0:
        raise ContractError("assign_pseudo_labels needs at least one centroid")
    pts = np.asarray(known_points, dtype=np.float64)
    if pts.size == 0:
        return np.zeros(0, dtype=np.int64)
    pts = np.atleast_2d(pts)
    if pts.shape[1] != centroids.matrix.shape[1]:
        raise DimensionError(f"points have {pts.shape[1]} features, centroids {centroids.matrix.shape[1]}")
    order = np.argsort(centroids.classes, kind="stable")
    ordered = centroids.matrix[order]
    diff = pts[:, None, :] - ordered[None, :, :]
    dist = (diff * diff).sum(axis=2)
    return centroids.classes[order][np.argmin(dist, axis=1)].astype(np.int64)


def pseudo_label(
    features: np.ndarray,
    centroids: Centroids,
    cfg: LofConfig,
    projection: Optional[np.ndarray] = None,
) -> PseudoLabelSet:
    known, unknown, scores = split_known_unknown(features, cfg, projection)
    labels = assign_pseudo_labels(np.asarray(features)[known], centroids)
    return PseudoLabelSet(known_indices=known, unknown_indices=unknown, labels=labels, lof_scores=scores)
