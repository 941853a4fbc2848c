"""
Synthetic open-set multi-domain data.

Shared class means sit on a circle in the first two input dimensions and
private class means on a wider, noisier outer ring. Each domain applies
its own affine shift (rotation in that plane, scale, translation) and
isotropic Gaussian noise. Source domains carry only the shared classes;
target domains add the private classes, whose ground truth collapses to a
single ``unknown`` id in the evaluation record.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from .errors import ContractError, DegaaConfigError
from .numcore.rng import make_rng

NO_LABEL = -1
PRIVATE_RING = 1.5
# radians; six shared classes sit 1.047 rad apart
TARGET_ROTATION = 0.47
# private classes are drawn with this many times the domain noise
DEFAULT_PRIVATE_SPREAD = 6.0


class Role(str, Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class DomainSpec:
    rotation: float = 0.0
    translation: Sequence[float] = ()
    scale: float = 1.0
    noise_sigma: float = 0.5

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise DegaaConfigError(f"DomainSpec.scale must be > 0, got {self.scale}")
        if self.noise_sigma <= 0:
            raise DegaaConfigError(f"DomainSpec.noise_sigma must be > 0, got {self.noise_sigma}")
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["translation"] = list(self.translation)
        return data


def default_domain_specs(count: int, in_dim: int, n_sources: Optional[int] = None) -> List[DomainSpec]:
    """
    Source domains stay close to the base layout; target domains turn by
    ``TARGET_ROTATION``, just short of half the angle between neighbouring
    shared classes. Every domain also drifts along its own axis.

    ``n_sources`` defaults to the first half of the domains (rounded up).
    """
    sources = (count + 1) // 2 if n_sources is None else int(n_sources)
    specs: List[DomainSpec] = []
    for d in range(count):
        translation = [0.0] * in_dim
        translation[(2 + d) % in_dim] = 1.0 * d
        if d < sources:
            rotation = 0.02 * d
        else:
            rotation = TARGET_ROTATION + 0.02 * (d - sources)
        specs.append(
            DomainSpec(
                rotation=rotation,
                translation=translation,
                scale=1.0 + 0.05 * (d % 2),
                noise_sigma=0.5,
            )
        )
    return specs


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    label: Optional[int]
    domain_id: int
    role: Role


@dataclass
class SampleBatch:
    indices: np.ndarray
    x: np.ndarray
    labels: np.ndarray
    domain_ids: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.shape[0])


@dataclass
class DatasetBundle:
    """
    Row-aligned arrays for every sample plus domain bookkeeping.

    ``labels`` is ``NO_LABEL`` for every target row. ``eval_truth`` holds the
    hidden target labels (private classes mapped to ``unknown_id``) and
    ``NO_LABEL`` on source rows; only the metrics module reads it.
    """
    x: np.ndarray
    domain_ids: np.ndarray
    roles: np.ndarray
    labels: np.ndarray
    eval_truth: np.ndarray
    n_sources: int
    n_targets: int
    shared_classes: int
    private_classes: int
    per_class: int
    domain_specs: List[DomainSpec] = field(default_factory=list)
    seed: int = 0
    private_spread: float = DEFAULT_PRIVATE_SPREAD

    @property
    def in_dim(self) -> int:
        return int(self.x.shape[1])

    @property
    def unknown_id(self) -> int:
        return self.shared_classes

    @property
    def num_domains(self) -> int:
        return self.n_sources + self.n_targets

    @property
    def source_domains(self) -> List[int]:
        return list(range(self.n_sources))

    @property
    def target_domains(self) -> List[int]:
        return list(range(self.n_sources, self.num_domains))

    def role_indices(self, role: Role) -> np.ndarray:
        return np.flatnonzero(self.roles == role.value)

    def domain_indices(self, domain_id: int) -> np.ndarray:
        return np.flatnonzero(self.domain_ids == domain_id)

    def per_domain_counts(self) -> Dict[int, int]:
        return {d: int((self.domain_ids == d).sum()) for d in range(self.num_domains)}

    def batch(self, indices: np.ndarray) -> SampleBatch:
        idx = np.asarray(indices, dtype=np.int64)
        return SampleBatch(idx, self.x[idx], self.labels[idx], self.domain_ids[idx])

    def samples(self) -> Iterator[Sample]:
        for i in range(self.x.shape[0]):
            label = int(self.labels[i])
            yield Sample(
                x=self.x[i],
                label=None if label == NO_LABEL else label,
                domain_id=int(self.domain_ids[i]),
                role=Role(self.roles[i]),
            )

    def without_labels(self) -> "DatasetBundle":
        """Copy with every label and the evaluation record blanked."""
        blank = np.full_like(self.labels, NO_LABEL)
        return DatasetBundle(
            x=self.x.copy(),
            domain_ids=self.domain_ids.copy(),
            roles=self.roles.copy(),
            labels=blank,
            eval_truth=blank.copy(),
            n_sources=self.n_sources,
            n_targets=self.n_targets,
            shared_classes=self.shared_classes,
            private_classes=self.private_classes,
            per_class=self.per_class,
            domain_specs=list(self.domain_specs),
            seed=self.seed,
            private_spread=self.private_spread,
        )


# ---------------------------------------------------------------------- #
# Generation
# ---------------------------------------------------------------------- #
def base_means(num_classes: int, in_dim: int, radius: float = 10.0, phase: float = 0.0) -> np.ndarray:
    angles = 2.0 * np.pi * (np.arange(num_classes) + phase) / max(num_classes, 1)
    means = np.zeros((num_classes, in_dim))
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def transform_means(means: np.ndarray, spec: DomainSpec) -> np.ndarray:
    c, s = np.cos(spec.rotation), np.sin(spec.rotation)
    out = means.copy()
    x0, x1 = means[:, 0].copy(), means[:, 1].copy()
    out[:, 0] = c * x0 - s * x1
    out[:, 1] = s * x0 + c * x1
    out *= spec.scale
    if spec.translation:
        out += np.asarray(spec.translation)[None, :]
    return out


def generate_bundle(
    n: int,
    m: int,
    shared_classes: int,
    private_classes: int,
    per_class: int,
    in_dim: int,
    domain_specs: Sequence[DomainSpec],
    seed: int,
    radius: float = 10.0,
    private_spread: float = DEFAULT_PRIVATE_SPREAD,
) -> DatasetBundle:
    """
    Shared classes sit on a ring of ``radius``; private classes on an outer
    ring (1.5 x radius, half a step out of phase) with ``private_spread``
    times the domain noise.
    """
    if n < 1 or m < 1:
        raise DegaaConfigError(f"need at least one source and one target domain, got n={n}, m={m}")
    if shared_classes < 2:
        raise DegaaConfigError(f"shared_classes must be >= 2, got {shared_classes}")
    if private_classes < 0:
        raise DegaaConfigError(f"private_classes must be >= 0, got {private_classes}")
    if per_class < 1:
        raise DegaaConfigError(f"per_class must be >= 1, got {per_class}")
    if in_dim < 2:
        raise DegaaConfigError(f"in_dim must be >= 2, got {in_dim}")
    if len(domain_specs) != n + m:
        raise DegaaConfigError(f"expected {n + m} domain specs, got {len(domain_specs)}")
    for d, spec in enumerate(domain_specs):
        if spec.translation and len(spec.translation) != in_dim:
            raise DegaaConfigError(
                f"domain {d}: translation has {len(spec.translation)} entries, in_dim is {in_dim}"
            )

    if private_spread <= 0:
        raise DegaaConfigError(f"private_spread must be > 0, got {private_spread}")

    rng = make_rng(seed, "datagen")
    means = np.concatenate([
        base_means(shared_classes, in_dim, radius),
        base_means(private_classes, in_dim, PRIVATE_RING * radius, phase=0.5),
    ])

    xs: List[np.ndarray] = []
    domain_ids: List[np.ndarray] = []
    roles: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    truth: List[np.ndarray] = []
    for d, spec in enumerate(domain_specs):
        is_source = d < n
        classes = shared_classes if is_source else shared_classes + private_classes
        shifted = transform_means(means[:classes], spec)
        class_ids = np.repeat(np.arange(classes), per_class)
        sigma = np.where(class_ids < shared_classes, spec.noise_sigma, spec.noise_sigma * private_spread)
        noise = rng.normal(0.0, 1.0, size=(class_ids.size, in_dim)) * sigma[:, None]
        xs.append(shifted[class_ids] + noise)
        domain_ids.append(np.full(class_ids.size, d, dtype=np.int64))
        roles.append(np.full(class_ids.size, (Role.SOURCE if is_source else Role.TARGET).value, dtype=object))
        if is_source:
            labels.append(class_ids.astype(np.int64))
            truth.append(np.full(class_ids.size, NO_LABEL, dtype=np.int64))
        else:
            labels.append(np.full(class_ids.size, NO_LABEL, dtype=np.int64))
            truth.append(np.minimum(class_ids, shared_classes).astype(np.int64))

    return DatasetBundle(
        x=np.concatenate(xs),
        domain_ids=np.concatenate(domain_ids),
        roles=np.concatenate(roles),
        labels=np.concatenate(labels),
        eval_truth=np.concatenate(truth),
        n_sources=n,
        n_targets=m,
        shared_classes=shared_classes,
        private_classes=private_classes,
        per_class=per_class,
        domain_specs=list(domain_specs),
        seed=seed,
        private_spread=private_spread,
    )


# ---------------------------------------------------------------------- #
# Batching
# ---------------------------------------------------------------------- #
def iterate_batches(
    bundle: DatasetBundle,
    role: Role,
    batch_size: int,
    rng: np.random.Generator,
    epochs: Optional[int] = None,
    drop_last: bool = False,
) -> Iterator[SampleBatch]:
    """
    Yield batches of one role, shuffling afresh every epoch.

    Within an epoch sampling is without replacement. ``epochs=None`` streams
    forever.
    """
    population = bundle.role_indices(role)
    if population.size == 0:
        raise ContractError(f"no {role.value} samples in bundle")
    if not (1 <= batch_size <= population.size):
        raise ContractError(f"batch_size {batch_size} outside [1, {population.size}]")
    epoch = 0
    while epochs is None or epoch < epochs:
        order = population[rng.permutation(population.size)]
        for start in range(0, order.size, batch_size):
            chunk = order[start:start + batch_size]
            if drop_last and chunk.size < batch_size:
                break
            yield bundle.batch(chunk)
        epoch += 1


# ---------------------------------------------------------------------- #
# Bundle file: one JSON header line, then CSV
# ---------------------------------------------------------------------- #
def _fmt(value: float) -> str:
    return repr(float(value))


def bundle_header(bundle: DatasetBundle) -> dict:
    return {
        "n_sources": bundle.n_sources,
        "n_targets": bundle.n_targets,
        "shared_classes": bundle.shared_classes,
        "private_classes": bundle.private_classes,
        "per_class": bundle.per_class,
        "in_dim": bundle.in_dim,
        "seed": bundle.seed,
        "private_spread": bundle.private_spread,
        "domain_specs": [s.to_dict() for s in bundle.domain_specs],
    }


def bundle_to_text(bundle: DatasetBundle, extra_header: Optional[dict] = None) -> str:
    header = bundle_header(bundle)
    if extra_header:
        header.update(extra_header)
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["domain_id", "role"] + [f"x_{i}" for i in range(bundle.in_dim)] + ["label", "eval_label"]
    )
    for i in range(bundle.x.shape[0]):
        label = int(bundle.labels[i])
        truth = int(bundle.eval_truth[i])
        writer.writerow(
            [int(bundle.domain_ids[i]), bundle.roles[i]]
            + [_fmt(v) for v in bundle.x[i]]
            + ["" if label == NO_LABEL else label, "" if truth == NO_LABEL else truth]
        )
    return buf.getvalue()


def bundle_from_text(text: str) -> DatasetBundle:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise DegaaConfigError("bundle file is missing its JSON header line")
    try:
        header = json.loads(lines[0][2:])
    except json.JSONDecodeError as exc:
        raise DegaaConfigError(f"bundle header is not valid JSON: {exc}") from exc
    reader = csv.reader(lines[1:])
    columns = next(reader)
    in_dim = int(header["in_dim"])
    if len(columns) != in_dim + 4:
        raise DegaaConfigError(f"bundle has {len(columns)} columns, expected {in_dim + 4}")
    rows = list(reader)
    x = np.array([[float(v) for v in r[2:2 + in_dim]] for r in rows], dtype=np.float64).reshape(len(rows), in_dim)
    return DatasetBundle(
        x=x,
        domain_ids=np.array([int(r[0]) for r in rows], dtype=np.int64),
        roles=np.array([r[1] for r in rows], dtype=object),
        labels=np.array([int(r[-2]) if r[-2] else NO_LABEL for r in rows], dtype=np.int64),
        eval_truth=np.array([int(r[-1]) if r[-1] else NO_LABEL for r in rows], dtype=np.int64),
        n_sources=int(header["n_sources"]),
        n_targets=int(header["n_targets"]),
        shared_classes=int(header["shared_classes"]),
        private_classes=int(header["private_classes"]),
        per_class=int(header["per_class"]),
        domain_specs=[DomainSpec(**s) for s in header["domain_specs"]],
        seed=int(header["seed"]),
        private_spread=float(header.get("private_spread", DEFAULT_PRIVATE_SPREAD)),
    )


def load_bundle(path: Path) -> DatasetBundle:
    return bundle_from_text(path.read_text(encoding="utf-8"))
