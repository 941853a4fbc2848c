from __future__ import annotations

from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from ..errors import DimensionError
from . import ops
from .tensor import Tensor


class Module:
    """Minimal parameter container: subclasses register children in ``_modules``."""

    def __init__(self) -> None:
        self._params: Dict[str, Tensor] = {}
        self._modules: Dict[str, "Module"] = {}

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield f"{prefix}{name}", p
        for name, mod in self._modules.items():
            yield from mod.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def state_vector(self) -> np.ndarray:
        params = self.parameters()
        if not params:
            return np.zeros(0)
        return np.concatenate([p.data.ravel() for p in params])

    def load_state_vector(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64).ravel()
        expected = self.num_parameters()
        if flat.size != expected:
            raise DimensionError(f"parameter vector has {flat.size} entries, expected {expected}")
        offset = 0
        for p in self.parameters():
            size = p.data.size
            p.data = flat[offset:offset + size].reshape(p.data.shape).copy()
            offset += size


class Linear(Module):
    """y = x W + b with W of shape (in, out)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, zero_init: bool = False) -> None:
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        if zero_init:
            w = np.zeros((in_dim, out_dim))
        else:
            # He fan-in scaling
            w = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, out_dim))
        self.weight = self.add_param("weight", w)
        self.bias = self.add_param("bias", np.zeros((1, out_dim)))

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(f"Linear({self.in_dim}->{self.out_dim}): input shape {x.shape}")
        return ops.add(ops.matmul(x, self.weight), self.bias)


class Mlp(Module):
    """ReLU network; no activation after the last layer."""

    def __init__(
        self,
        sizes: Sequence[int],
        rng: np.random.Generator,
        zero_last: bool = False,
    ) -> None:
        super().__init__()
        if len(sizes) < 2:
            raise DimensionError(f"Mlp needs at least input and output sizes, got {list(sizes)}")
        self.sizes = [int(s) for s in sizes]
        self.layers: List[Linear] = []
        last = len(self.sizes) - 2
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            layer = Linear(a, b, rng, zero_init=zero_last and i == last)
            self.add_module(f"l{i}", layer)
            self.layers.append(layer)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = ops.relu(h)
        return h

    def forward_numpy(self, x: np.ndarray) -> np.ndarray:
        return self(Tensor(np.atleast_2d(x))).data


def state_payload(module: Module) -> Dict[str, object]:
    """Layer manifest plus the flat parameter vector, JSON-ready."""
    return {
        "manifest": [[name, list(p.data.shape)] for name, p in module.named_parameters()],
        "params": [float(v) for v in module.state_vector()],
    }


def load_state_payload(module: Module, payload: Dict[str, object]) -> None:
    expected = [[name, list(p.data.shape)] for name, p in module.named_parameters()]
    manifest = [[str(name), [int(s) for s in shape]] for name, shape in payload.get("manifest", [])]
    if manifest != expected:
        raise DimensionError("checkpoint layer manifest does not match the network")
    module.load_state_vector(np.asarray(payload["params"], dtype=np.float64))
