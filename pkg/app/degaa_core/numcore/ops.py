"""
Differentiable primitives.

Each function validates shapes, computes the forward value with numpy and
registers a closure returning the input gradients. Inputs and outputs are
checked for finiteness at the boundary.
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractError, DimensionError, NumericError
from .tensor import Tensor, record

PROB_FLOOR = 1e-300

OP_KINDS: Tuple[str, ...] = (
    "matmul",
    "add",
    "sub",
    "relu",
    "softmax_rows",
    "masked_softmax_rows",
    "concat_cols",
    "concat_rows",
    "mean",
    "sum",
    "cross_entropy",
    "elementwise_mul",
    "scale",
    "transpose",
    "take_rows",
    "pairwise_sq_dist",
    "l2_normalize_rows",
)


def _check_finite(kind: str, *tensors: Tensor) -> None:
    for t in tensors:
        if not np.all(np.isfinite(t.data)):
            raise NumericError(f"{kind}: non-finite input")


def _require_2d(kind: str, *tensors: Tensor) -> None:
    for t in tensors:
        if t.data.ndim != 2:
            raise DimensionError(f"{kind}: expected a 2-D tensor, got shape {t.shape}")


def _broadcast_kind(kind: str, a: Tensor, b: Tensor) -> bool:
    """True when b is a row vector broadcast over a's rows."""
    if a.shape == b.shape:
        return False
    if a.data.ndim == 2 and b.shape == (1, a.shape[1]):
        return True
    raise DimensionError(f"{kind}: shapes {a.shape} and {b.shape} do not conform")


# ---------------------------------------------------------------------- #
# Linear algebra
# ---------------------------------------------------------------------- #
def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    _check_finite("matmul", a, b)
    av, bv = a.data, b.data

    def grad_fn(g: np.ndarray):
        return g @ bv.T, av.T @ g

    return record("matmul", (a, b), av @ bv, grad_fn)


def transpose(x: Tensor) -> Tensor:
    _require_2d("transpose", x)
    _check_finite("transpose", x)
    return record("transpose", (x,), x.data.T.copy(), lambda g: (g.T,))


# ---------------------------------------------------------------------- #
# Elementwise
# ---------------------------------------------------------------------- #
def add(a: Tensor, b: Tensor) -> Tensor:
    row = _broadcast_kind("add", a, b)
    _check_finite("add", a, b)

    def grad_fn(g: np.ndarray):
        return g, (g.sum(axis=0, keepdims=True) if row else g)

    return record("add", (a, b), a.data + b.data, grad_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    row = _broadcast_kind("sub", a, b)
    _check_finite("sub", a, b)

    def grad_fn(g: np.ndarray):
        return g, -(g.sum(axis=0, keepdims=True) if row else g)

    return record("sub", (a, b), a.data - b.data, grad_fn)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    row = _broadcast_kind("elementwise_mul", a, b)
    _check_finite("elementwise_mul", a, b)
    av, bv = a.data, b.data

    def grad_fn(g: np.ndarray):
        gb = g * av
        return g * bv, (gb.sum(axis=0, keepdims=True) if row else gb)

    return record("elementwise_mul", (a, b), av * bv, grad_fn)


def scale(x: Tensor, c: float) -> Tensor:
    if not np.isfinite(c):
        raise NumericError("scale: non-finite factor")
    _check_finite("scale", x)
    return record("scale", (x,), x.data * c, lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    _check_finite("relu", x)
    mask = x.data > 0
    return record("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


# ---------------------------------------------------------------------- #
# Row-wise normalisations
# ---------------------------------------------------------------------- #
def _softmax_backward(y: np.ndarray):
    def grad_fn(g: np.ndarray):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return grad_fn


def softmax_rows(x: Tensor) -> Tensor:
    _require_2d("softmax_rows", x)
    _check_finite("softmax_rows", x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    return record("softmax_rows", (x,), y, _softmax_backward(y))


def masked_softmax_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """
    Softmax of each row over the entries where ``mask`` is true.

    Masked entries get probability 0; a row with no allowed entry is all
    zeros. The row maximum is taken over allowed entries only, so values in
    masked positions never influence the result.
    """
    _require_2d("masked_softmax_rows", x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise DimensionError(f"masked_softmax_rows: mask {mask.shape} vs input {x.shape}")
    _check_finite("masked_softmax_rows", x)
    has_any = mask.any(axis=1, keepdims=True)
    row_max = np.where(mask, x.data, -np.inf).max(axis=1, keepdims=True)
    row_max = np.where(has_any, row_max, 0.0)
    e = np.where(mask, np.exp(np.where(mask, x.data - row_max, 0.0)), 0.0)
    denom = e.sum(axis=1, keepdims=True)
    y = e / np.where(has_any, denom, 1.0)
    return record("masked_softmax_rows", (x,), y, _softmax_backward(y))


def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    _require_2d("l2_normalize_rows", x)
    _check_finite("l2_normalize_rows", x)
    raw = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    active = raw > eps
    norm = np.where(active, raw, eps)
    y = x.data / norm

    def grad_fn(g: np.ndarray):
        proj = np.where(active, (g * y).sum(axis=1, keepdims=True), 0.0)
        return ((g - y * proj) / norm,)

    return record("l2_normalize_rows", (x,), y, grad_fn)


# ---------------------------------------------------------------------- #
# Structural
# ---------------------------------------------------------------------- #
def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("concat_cols: no inputs")
    _require_2d("concat_cols", *parts)
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise DimensionError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
    _check_finite("concat_cols", *parts)
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def grad_fn(g: np.ndarray):
        return [g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts))]

    return record("concat_cols", tuple(parts), np.concatenate([p.data for p in parts], axis=1), grad_fn)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("concat_rows: no inputs")
    _require_2d("concat_rows", *parts)
    cols = {p.shape[1] for p in parts}
    if len(cols) != 1:
        raise DimensionError(f"concat_rows: column counts differ {[p.shape for p in parts]}")
    _check_finite("concat_rows", *parts)
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def grad_fn(g: np.ndarray):
        return [g[bounds[i]:bounds[i + 1]] for i in range(len(parts))]

    return record("concat_rows", tuple(parts), np.concatenate([p.data for p in parts], axis=0), grad_fn)


def take_rows(x: Tensor, index: Sequence[int]) -> Tensor:
    _require_2d("take_rows", x)
    idx = np.asarray(index, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise DimensionError(f"take_rows: index out of range for shape {x.shape}")
    _check_finite("take_rows", x)
    n = x.shape[0]

    def grad_fn(g: np.ndarray):
        out = np.zeros((n, g.shape[1]))
        np.add.at(out, idx, g)
        return (out,)

    return record("take_rows", (x,), x.data[idx], grad_fn)


# ---------------------------------------------------------------------- #
# Reductions
# ---------------------------------------------------------------------- #
def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    _check_finite("sum", x)
    shape = x.data.shape
    if axis is None:
        return record("sum", (x,), np.asarray(x.data.sum()), lambda g: (np.broadcast_to(g, shape).copy(),))
    if x.data.ndim != 2 or axis not in (0, 1):
        raise DimensionError(f"sum: axis {axis} invalid for shape {x.shape}")
    return record(
        "sum", (x,), x.data.sum(axis=axis, keepdims=True),
        lambda g: (np.broadcast_to(g, shape).copy(),),
    )


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    _check_finite("mean", x)
    shape = x.data.shape
    if axis is None:
        n = x.data.size
        if n == 0:
            raise ContractError("mean of an empty tensor")
        return record("mean", (x,), np.asarray(x.data.mean()), lambda g: (np.full(shape, float(g) / n),))
    if x.data.ndim != 2 or axis not in (0, 1):
        raise DimensionError(f"mean: axis {axis} invalid for shape {x.shape}")
    n = shape[axis]
    if n == 0:
        raise ContractError("mean of an empty axis")
    return record(
        "mean", (x,), x.data.mean(axis=axis, keepdims=True),
        lambda g: (np.broadcast_to(g / n, shape).copy(),),
    )


# ---------------------------------------------------------------------- #
# Losses and distances
# ---------------------------------------------------------------------- #
def cross_entropy(probs: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean over rows of -log p[i, y_i]; ``probs`` rows must sum to 1."""
    _require_2d("cross_entropy", probs)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, c = probs.shape
    if y.shape[0] != n:
        raise DimensionError(f"cross_entropy: {n} rows but {y.shape[0]} labels")
    if n == 0:
        raise ContractError("cross_entropy of an empty batch")
    if y.min() < 0 or y.max() >= c:
        raise ContractError(f"cross_entropy: labels outside [0, {c})")
    _check_finite("cross_entropy", probs)
    if np.any(np.abs(probs.data.sum(axis=1) - 1.0) > 1e-6):
        raise ContractError("cross_entropy: probability rows must sum to 1")
    rows = np.arange(n)
    picked = np.maximum(probs.data[rows, y], PROB_FLOOR)
    value = -np.log(picked).mean()

    def grad_fn(g: np.ndarray):
        out = np.zeros_like(probs.data)
        out[rows, y] = -float(g) / (n * picked)
        return (out,)

    return record("cross_entropy", (probs,), np.asarray(value), grad_fn)


def pairwise_sq_dist(a: Tensor, b: Tensor) -> Tensor:
    """D[i, j] = ||a_i - b_j||^2."""
    _require_2d("pairwise_sq_dist", a, b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"pairwise_sq_dist: shapes {a.shape} and {b.shape} do not conform")
    _check_finite("pairwise_sq_dist", a, b)
    av, bv = a.data, b.data
    diff = av[:, None, :] - bv[None, :, :]
    d = (diff * diff).sum(axis=2)

    def grad_fn(g: np.ndarray):
        ga = 2.0 * (g.sum(axis=1, keepdims=True) * av - g @ bv)
        gb = 2.0 * (g.sum(axis=0)[:, None] * bv - g.T @ av)
        return ga, gb

    return record("pairwise_sq_dist", (a, b), d, grad_fn)
