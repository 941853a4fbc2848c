from __future__ import annotations

from dataclasses import dataclass

from ..artifacts import BUNDLE, ArtifactStore
from ..config import RunConfig
from ..datagen import Role, bundle_to_text, generate_bundle
from .common import CancelCheck


@dataclass
class GenStats:
    source_samples: int = 0
    target_samples: int = 0
    files_written: int = 0


def run(cfg: RunConfig, store: ArtifactStore, cancel_check: CancelCheck = None) -> GenStats:
    if cancel_check:
        cancel_check()
    data = cfg.data
    bundle = generate_bundle(
        data.n_sources,
        data.n_targets,
        data.shared_classes,
        data.private_classes,
        data.per_class,
        data.in_dim,
        data.specs(),
        cfg.seed,
        radius=data.radius,
        private_spread=data.private_spread,
    )
    store.write_text(BUNDLE, bundle_to_text(bundle, extra_header={"config_hash": store.config_hash}))
    return GenStats(
        source_samples=int(bundle.role_indices(Role.SOURCE).size),
        target_samples=int(bundle.role_indices(Role.TARGET).size),
        files_written=1,
    )
