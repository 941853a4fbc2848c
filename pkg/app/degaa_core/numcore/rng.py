from __future__ import annotations

from typing import Union

import numpy as np

StreamKey = Union[int, str]


def _stream_int(key: StreamKey) -> int:
    if isinstance(key, int):
        return key
    # Stable across processes, unlike hash().
    return int.from_bytes(key.encode("utf-8")[:8].ljust(8, b"\0"), "little")


def make_rng(seed: int, *streams: StreamKey) -> np.random.Generator:
    """
    Counter-based Philox generator for (seed, *streams).

    Callers own the generator and pass it explicitly; nothing in the package
    touches numpy's global random state.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed)] + [_stream_int(s) for s in streams]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
