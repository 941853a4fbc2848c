"""
Reverse-mode tape over float64 numpy arrays.

Every tensor gets a monotonically increasing uid at construction. An op
whose inputs require grad records an ``OpRecord`` on its output; the
``ComputeGraph`` of a loss is the set of records reachable from it, ordered
by construction, and ``backward`` walks that order in reverse.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractError, NumericError

_UIDS = itertools.count()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
GradientMap = Dict[int, np.ndarray]


@dataclass(frozen=True)
class OpRecord:
    kind: str
    inputs: Tuple["Tensor", ...]
    output_id: int
    backward_fn: BackwardFn


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "uid", "_op")

    def __init__(
        self,
        data: object,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ) -> None:
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite value in tensor {name or ''}".rstrip())
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.uid: int = next(_UIDS)
        self._op: Optional[OpRecord] = None

    # ------------------------------------------------------------------ #
    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def is_leaf(self) -> bool:
        return self._op is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    # Arithmetic sugar; the op table lives in ops.py.
    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other: object) -> "Tensor":
        from . import ops

        if isinstance(other, Tensor):
            return ops.elementwise_mul(self, other)
        return ops.scale(self, float(other))  # type: ignore[arg-type]

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from . import ops

        return ops.scale(self, -1.0)


def record(
    kind: str,
    inputs: Sequence[Tensor],
    out_data: np.ndarray,
    backward_fn: BackwardFn,
) -> Tensor:
    """Wrap an op result, recording it on the tape when any input needs grad."""
    if not np.all(np.isfinite(out_data)):
        raise NumericError(f"{kind} produced a non-finite value")
    needs_grad = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(out_data, dtype=np.float64)
    out.grad = None
    out.requires_grad = needs_grad
    out.name = None
    out.uid = next(_UIDS)
    out._op = OpRecord(kind, tuple(inputs), out.uid, backward_fn) if needs_grad else None
    return out


class ComputeGraph:
    """Op records reachable from one output, in construction order."""

    def __init__(self, records: Iterable[OpRecord]) -> None:
        self.records: List[OpRecord] = sorted(records, key=lambda r: r.output_id)

    @classmethod
    def trace(cls, output: Tensor) -> "ComputeGraph":
        seen: Dict[int, OpRecord] = {}
        stack: List[Tensor] = [output]
        while stack:
            node = stack.pop()
            op = node._op
            if op is None or op.output_id in seen:
                continue
            seen[op.output_id] = op
            stack.extend(op.inputs)
        return cls(seen.values())

    def leaves(self) -> List[Tensor]:
        found: Dict[int, Tensor] = {}
        for rec in self.records:
            for t in rec.inputs:
                if t.is_leaf and t.requires_grad:
                    found.setdefault(t.uid, t)
        return [found[k] for k in sorted(found)]

    def __len__(self) -> int:
        return len(self.records)


def backward(loss: Tensor, graph: Optional[ComputeGraph] = None) -> GradientMap:
    """
    Back-propagate a scalar loss.

    Returns a map from leaf uid to gradient and also stores each leaf's
    gradient on ``Tensor.grad`` (overwriting any previous value).
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any parameter")
    graph = graph or ComputeGraph.trace(loss)

    grads: GradientMap = {loss.uid: np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}
    for rec in reversed(graph.records):
        g = grads.pop(rec.output_id, None)
        if g is None:
            continue
        for inp, ig in zip(rec.inputs, rec.backward_fn(g)):
            if ig is None or not inp.requires_grad:
                continue
            if inp.uid in grads:
                grads[inp.uid] = grads[inp.uid] + ig
            else:
                grads[inp.uid] = ig
            if inp.is_leaf:
                leaves[inp.uid] = inp

    result: GradientMap = {}
    for uid, leaf in leaves.items():
        leaf.grad = grads[uid]
        result[uid] = grads[uid]
    return result
