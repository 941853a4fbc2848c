from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractError, DegaaConfigError, DimensionError
from .tensor import GradientMap, Tensor


@dataclass(frozen=True)
class SgdConfig:
    """SGD with momentum and a cosine learning-rate schedule."""
    lr_max: float = 0.01
    lr_min: float = 0.001
    total_steps: int = 1
    momentum: float = 0.9
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if not (0 < self.lr_min <= self.lr_max):
            raise DegaaConfigError(f"SgdConfig needs 0 < lr_min <= lr_max, got {self.lr_min}, {self.lr_max}")
        if self.total_steps < 1:
            raise DegaaConfigError(f"SgdConfig.total_steps must be positive, got {self.total_steps}")
        if not (0.0 <= self.momentum < 1.0):
            raise DegaaConfigError(f"SgdConfig.momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise DegaaConfigError(f"SgdConfig.weight_decay must be >= 0, got {self.weight_decay}")


def cosine_lr(step: int, cfg: SgdConfig) -> float:
    if not (0 <= step <= cfg.total_steps):
        raise ContractError(f"step {step} outside [0, {cfg.total_steps}]")
    cos = math.cos(math.pi * step / cfg.total_steps)
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + cos)


def sgd_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    lr: float,
    momentum_state: Optional[Sequence[np.ndarray]] = None,
    momentum: float = 0.0,
    weight_decay: float = 0.0,
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    One update: v' = momentum * v + (g + weight_decay * p), p' = p - lr * v'.

    With momentum 0 this is exactly p' = p - lr * g.
    """
    if len(params) != len(grads):
        raise DimensionError(f"sgd_step: {len(params)} params but {len(grads)} grads")
    state = list(momentum_state) if momentum_state is not None else [np.zeros_like(p) for p in params]
    new_params: List[np.ndarray] = []
    new_state: List[np.ndarray] = []
    for p, g, v in zip(params, grads, state):
        if p.shape != g.shape or p.shape != v.shape:
            raise DimensionError(f"sgd_step: param {p.shape} vs grad {g.shape}")
        if weight_decay:
            g = g + weight_decay * p
        v_new = momentum * v + g if momentum else g
        new_params.append(p - lr * v_new)
        new_state.append(v_new)
    return new_params, new_state


class Sgd:
    """Stateful wrapper owning the velocity buffers of one parameter list."""

    def __init__(self, params: Sequence[Tensor], cfg: SgdConfig) -> None:
        self.params = list(params)
        self.cfg = cfg
        self.step_count = 0
        self._velocity: List[np.ndarray] = [np.zeros_like(p.data) for p in self.params]

    def current_lr(self) -> float:
        return cosine_lr(min(self.step_count, self.cfg.total_steps), self.cfg)

    def step(self, grads: GradientMap) -> float:
        """Apply one update; parameters without a gradient receive zeros."""
        lr = self.current_lr()
        g = [grads.get(p.uid, np.zeros_like(p.data)) for p in self.params]
        new_params, self._velocity = sgd_step(
            [p.data for p in self.params],
            g,
            lr,
            self._velocity,
            momentum=self.cfg.momentum,
            weight_decay=self.cfg.weight_decay,
        )
        for p, value in zip(self.params, new_params):
            p.data = value
        self.step_count += 1
        return lr
