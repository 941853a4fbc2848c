"""
Open-set accuracy bookkeeping. This is the only module that reads the hidden
target ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np

from .errors import DimensionError

if TYPE_CHECKING:
    from .datagen import DatasetBundle


@dataclass
class Metrics:
    """
    ``os`` averages per-class recall over the known classes and the single
    unknown class; ``os_star`` over the known classes only. Classes absent
    from the truth do not take part in either mean.
    """
    os: float
    os_star: float
    unknown_recall: Optional[float]
    per_class_accuracy: Dict[int, float] = field(default_factory=dict)
    confusion: List[List[int]] = field(default_factory=list)
    pseudo_label_accuracy: Optional[float] = None

    def to_dict(self, unknown_id: int) -> dict:
        return {
            "os": self.os,
            "os_star": self.os_star,
            "unknown_recall": self.unknown_recall,
            "per_class_accuracy": {
                ("unknown" if c == unknown_id else str(c)): v for c, v in sorted(self.per_class_accuracy.items())
            },
            "confusion": self.confusion,
            "pseudo_label_accuracy": self.pseudo_label_accuracy,
        }


def confusion_matrix(truth: np.ndarray, pred: np.ndarray, num_labels: int) -> np.ndarray:
    out = np.zeros((num_labels, num_labels), dtype=np.int64)
    np.add.at(out, (truth, pred), 1)
    return out


def compute_metrics(truth: np.ndarray, pred: np.ndarray, shared_classes: int) -> Metrics:
    """``truth`` and ``pred`` use ids 0..C_s-1 for known classes and C_s for unknown."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise DimensionError(f"truth {truth.shape} vs predictions {pred.shape}")
    unknown_id = shared_classes
    if truth.size and (truth.min() < 0 or truth.max() > unknown_id or pred.min() < 0 or pred.max() > unknown_id):
        raise DimensionError(f"labels must lie in [0, {unknown_id}]")

    confusion = confusion_matrix(truth, pred, shared_classes + 1)
    support = confusion.sum(axis=1)
    per_class = {c: float(confusion[c, c] / support[c]) for c in range(shared_classes + 1) if support[c] > 0}

    known = [per_class[c] for c in range(shared_classes) if c in per_class]
    os_star = float(np.mean(known)) if known else 0.0
    unknown_recall = per_class.get(unknown_id)
    if unknown_recall is None:
        os = os_star
    else:
        os = (len(known) * os_star + unknown_recall) / (len(known) + 1)
    return Metrics(
        os=float(os),
        os_star=os_star,
        unknown_recall=unknown_recall,
        per_class_accuracy=per_class,
        confusion=confusion.tolist(),
    )


def pseudo_label_accuracy(labels: np.ndarray, truth: np.ndarray) -> Optional[float]:
    """Fraction of known-flagged points whose pseudo-label matches the truth; None when none were kept."""
    labels = np.asarray(labels, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if labels.size == 0:
        return None
    return float(np.mean(labels == truth))


def unknown_recall(unknown_indices: np.ndarray, truth: np.ndarray, unknown_id: int) -> Optional[float]:
    """Share of truly unknown points that LOF flagged; None when the batch has none."""
    truth = np.asarray(truth, dtype=np.int64)
    actual = np.flatnonzero(truth == unknown_id)
    if actual.size == 0:
        return None
    return float(np.isin(actual, np.asarray(unknown_indices, dtype=np.int64)).mean())


# ---------------------------------------------------------------------- #
# Bundle-level helpers; the truth column is read here and nowhere else
# ---------------------------------------------------------------------- #
def refresh_quality(
    bundle: "DatasetBundle",
    batch_indices: np.ndarray,
    known_indices: np.ndarray,
    labels: np.ndarray,
    unknown_indices: np.ndarray,
) -> Tuple[Optional[float], Optional[float]]:
    """(pseudo-label accuracy, unknown recall) of one labelled target batch; indices are batch positions."""
    truth = bundle.eval_truth[np.asarray(batch_indices, dtype=np.int64)]
    known = np.asarray(known_indices, dtype=np.int64)
    return (
        pseudo_label_accuracy(labels, truth[known]),
        unknown_recall(unknown_indices, truth, bundle.unknown_id),
    )


def target_metrics(bundle: "DatasetBundle", target_indices: np.ndarray, pred: np.ndarray) -> Metrics:
    truth = bundle.eval_truth[np.asarray(target_indices, dtype=np.int64)]
    return compute_metrics(truth, pred, bundle.shared_classes)
