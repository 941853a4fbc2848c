from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from app.degaa_core.config import RunConfig, config_from_dict
from app.degaa_core.datagen import DatasetBundle, default_domain_specs, generate_bundle
from app.degaa_core.numcore import make_rng

RESOURCES = Path(__file__).resolve().parent.parent / "app" / "resources"
SMOKE_CONFIG = RESOURCES / "desk_smoke.json"


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(1234, "tests")


@pytest.fixture
def small_bundle() -> DatasetBundle:
    """1 source + 1 target domain, 3 shared and 1 private class, 10 points each."""
    return generate_bundle(
        n=1,
        m=1,
        shared_classes=3,
        private_classes=1,
        per_class=10,
        in_dim=4,
        domain_specs=default_domain_specs(2, 4),
        seed=7,
    )


@pytest.fixture
def four_domain_bundle() -> DatasetBundle:
    return generate_bundle(
        n=2,
        m=2,
        shared_classes=3,
        private_classes=1,
        per_class=8,
        in_dim=4,
        domain_specs=default_domain_specs(4, 4),
        seed=3,
    )


@pytest.fixture
def smoke_path() -> Path:
    return SMOKE_CONFIG


@pytest.fixture
def smoke_raw() -> dict:
    return json.loads(SMOKE_CONFIG.read_text(encoding="utf-8"))


@pytest.fixture
def smoke_config(smoke_raw) -> RunConfig:
    return config_from_dict(smoke_raw)


def _numeric_grad(fn, arr: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function with respect to ``arr`` (mutated in place, then restored)."""
    grad = np.zeros_like(arr)
    for idx in np.ndindex(*arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        up = fn()
        arr[idx] = old - h
        down = fn()
        arr[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


@pytest.fixture
def numeric_grad():
    return _numeric_grad
