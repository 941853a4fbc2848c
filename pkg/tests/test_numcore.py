from __future__ import annotations

import math

import numpy as np
import pytest

from app.degaa_core.errors import ContractError, DegaaConfigError, DimensionError, NumericError
from app.degaa_core.numcore import (
    Mlp,
    Sgd,
    SgdConfig,
    Tensor,
    backward,
    cosine_lr,
    load_state_payload,
    make_rng,
    ops,
    sgd_step,
    state_payload,
)


def _weighted_scalar(out: Tensor, weights: np.ndarray) -> Tensor:
    if out.data.ndim == 0:
        return out
    return ops.sum(ops.elementwise_mul(out, Tensor(weights)))


def _check_op(build, arrays, numeric_grad, rtol=1e-5, atol=1e-7):
    """Compare tape gradients of sum(w * build(*inputs)) with central differences."""
    forward = build(*[Tensor(a) for a in arrays])
    weights = make_rng(99, "weights").normal(size=forward.data.shape)

    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    loss = _weighted_scalar(build(*leaves), weights)
    grads = backward(loss)

    for leaf, arr in zip(leaves, arrays):
        def value() -> float:
            out = build(*[Tensor(a) for a in arrays])
            return float(_weighted_scalar(out, weights).data)

        expected = numeric_grad(value, arr)
        np.testing.assert_allclose(grads[leaf.uid], expected, rtol=rtol, atol=atol)


# ---------------------------------------------------------------------- #
# Forward values
# ---------------------------------------------------------------------- #
def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = ops.matmul(a, Tensor(np.eye(2)))
    np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])


def test_softmax_uniform_row():
    out = ops.softmax_rows(Tensor([[0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], rtol=0, atol=1e-15)


def test_cross_entropy_matches_scalar_evaluation():
    probs = ops.softmax_rows(Tensor([[2.0, 1.0, 0.0]]))
    value = ops.cross_entropy(probs, [0]).item()
    first = math.exp(2.0) / (math.exp(2.0) + math.exp(1.0) + math.exp(0.0))
    assert value == pytest.approx(-math.log(first), rel=1e-12)


def test_masked_softmax_blank_row_and_ignores_masked_values():
    x = Tensor([[1.0, 500.0, 2.0], [3.0, 4.0, 5.0]])
    mask = np.array([[True, False, True], [False, False, False]])
    out = ops.masked_softmax_rows(x, mask).data
    e = np.exp([1.0 - 2.0, 0.0])
    np.testing.assert_allclose(out[0], [e[0] / e.sum(), 0.0, e[1] / e.sum()])
    np.testing.assert_array_equal(out[1], [0.0, 0.0, 0.0])


def test_pairwise_sq_dist_values():
    a = Tensor([[0.0, 0.0], [1.0, 1.0]])
    b = Tensor([[3.0, 4.0]])
    np.testing.assert_allclose(ops.pairwise_sq_dist(a, b).data, [[25.0], [13.0]])


def test_l2_normalize_zero_row_stays_zero():
    out = ops.l2_normalize_rows(Tensor([[3.0, 4.0], [0.0, 0.0]])).data
    np.testing.assert_allclose(out, [[0.6, 0.8], [0.0, 0.0]])


# ---------------------------------------------------------------------- #
# Errors
# ---------------------------------------------------------------------- #
def test_matmul_shape_mismatch_names_op_and_shapes():
    with pytest.raises(DimensionError, match=r"matmul.*\(2, 3\).*\(2, 2\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


def test_non_finite_input_rejected():
    with pytest.raises(NumericError):
        Tensor([[1.0, float("nan")]])


def test_add_rejects_non_conforming_shapes():
    with pytest.raises(DimensionError):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 1))))


def test_cross_entropy_rejects_bad_labels():
    probs = ops.softmax_rows(Tensor(np.zeros((2, 3))))
    with pytest.raises(ContractError):
        ops.cross_entropy(probs, [0, 3])


def test_backward_needs_scalar_loss():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        backward(ops.scale(x, 2.0))


# ---------------------------------------------------------------------- #
# Gradients
# ---------------------------------------------------------------------- #
GRADIENT_CASES = 100


def _shape(gen: np.random.Generator) -> tuple:
    return int(gen.integers(1, 5)), int(gen.integers(1, 5))


def _off_kink(values: np.ndarray) -> np.ndarray:
    """Entries at least 0.1 away from zero, so a 1e-6 step never crosses the relu kink."""
    return np.where(values >= 0, 1.0, -1.0) * (0.1 + np.abs(values))


def _random_case(kind: str, seed: int):
    """A random instance of one op kind: (build, input arrays)."""
    gen = make_rng(seed, "grad", kind)
    rows, cols = _shape(gen)
    a = gen.normal(size=(rows, cols))
    if kind == "matmul":
        return ops.matmul, [a, gen.normal(size=(cols, int(gen.integers(1, 5))))]
    if kind in ("add", "sub", "elementwise_mul"):
        other = gen.normal(size=(1, cols) if gen.random() < 0.5 else (rows, cols))
        return getattr(ops, kind), [a, other]
    if kind == "scale":
        c = float(gen.uniform(-3.0, 3.0))
        return (lambda x: ops.scale(x, c)), [a]
    if kind == "relu":
        return ops.relu, [_off_kink(a)]
    if kind == "transpose":
        return ops.transpose, [a]
    if kind == "softmax_rows":
        return ops.softmax_rows, [2.0 * a]
    if kind == "masked_softmax_rows":
        mask = gen.random((rows, cols)) < 0.6
        return (lambda x: ops.masked_softmax_rows(x, mask)), [2.0 * a]
    if kind == "l2_normalize_rows":
        return ops.l2_normalize_rows, [_off_kink(a) * 2.0]
    if kind == "concat_cols":
        return (lambda x, y: ops.concat_cols([x, y])), [a, gen.normal(size=(rows, int(gen.integers(1, 5))))]
    if kind == "concat_rows":
        return (lambda x, y: ops.concat_rows([x, y])), [a, gen.normal(size=(int(gen.integers(1, 5)), cols))]
    if kind == "take_rows":
        index = gen.integers(0, rows, size=int(gen.integers(1, 6))).tolist()
        return (lambda x: ops.take_rows(x, index)), [a]
    if kind in ("sum", "mean"):
        axis = [None, 0, 1][int(gen.integers(0, 3))]
        fn = getattr(ops, kind)
        return (lambda x: fn(x, axis=axis)), [a]
    if kind == "pairwise_sq_dist":
        return ops.pairwise_sq_dist, [a, gen.normal(size=(int(gen.integers(1, 5)), cols))]
    if kind == "cross_entropy":
        labels = gen.integers(0, cols, size=rows).tolist()
        return (lambda x: ops.cross_entropy(ops.softmax_rows(x), labels)), [a]
    raise AssertionError(f"no generator for {kind}")


def test_every_op_kind_has_a_generator():
    for kind in ops.OP_KINDS:
        build, arrays = _random_case(kind, 0)
        assert callable(build) and arrays


@pytest.mark.parametrize("seed", range(GRADIENT_CASES))
@pytest.mark.parametrize("kind", ops.OP_KINDS)
def test_op_gradients_match_finite_differences(kind, seed, numeric_grad):
    build, arrays = _random_case(kind, seed)
    _check_op(build, arrays, numeric_grad, rtol=1e-4, atol=1e-6)


def test_linear_sum_gradient_is_broadcast_input():
    w = Tensor(np.zeros((3, 2)), requires_grad=True)
    x = Tensor([[1.0, 2.0, 3.0]])
    grads = backward(ops.sum(ops.matmul(x, w)))
    np.testing.assert_array_equal(grads[w.uid], [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    np.testing.assert_array_equal(w.grad, grads[w.uid])


def test_dead_relu_blocks_gradient():
    c = Tensor([[4.0]], requires_grad=True)
    loss = ops.sum(ops.elementwise_mul(ops.relu(Tensor([[-1.0]])), c))
    grads = backward(loss)
    assert grads[c.uid][0, 0] == 0.0


def test_mlp_gradients_match_finite_differences(numeric_grad):
    gen = make_rng(11, "mlp")
    net = Mlp([3, 5, 4, 2], gen)
    x = gen.normal(size=(5, 3))
    labels = [0, 1, 1, 0, 1]

    loss = ops.cross_entropy(ops.softmax_rows(net(Tensor(x))), labels)
    grads = backward(loss)

    for _, param in net.named_parameters():
        def value() -> float:
            return ops.cross_entropy(ops.softmax_rows(net(Tensor(x))), labels).item()

        expected = numeric_grad(value, param.data)
        np.testing.assert_allclose(grads[param.uid], expected, rtol=1e-4, atol=1e-8)


def test_shared_input_accumulates_gradient():
    x = Tensor([[2.0, -1.0]], requires_grad=True)
    loss = ops.sum(ops.add(x, x))
    grads = backward(loss)
    np.testing.assert_array_equal(grads[x.uid], [[2.0, 2.0]])


# ---------------------------------------------------------------------- #
# Optimiser
# ---------------------------------------------------------------------- #
def test_cosine_schedule_endpoints():
    cfg = SgdConfig(lr_max=0.1, lr_min=0.02, total_steps=10)
    assert cosine_lr(0, cfg) == pytest.approx(0.1)
    assert cosine_lr(10, cfg) == pytest.approx(0.02)
    assert cosine_lr(5, cfg) == pytest.approx(0.06)


def test_cosine_schedule_out_of_range():
    cfg = SgdConfig(total_steps=4)
    with pytest.raises(ContractError):
        cosine_lr(5, cfg)
    with pytest.raises(ContractError):
        cosine_lr(-1, cfg)


def test_sgd_config_validation():
    with pytest.raises(DegaaConfigError):
        SgdConfig(lr_max=0.001, lr_min=0.01)
    with pytest.raises(DegaaConfigError):
        SgdConfig(momentum=1.0)


def test_sgd_step_plain():
    params, _ = sgd_step([np.array([1.0])], [np.array([2.0])], lr=0.5)
    np.testing.assert_array_equal(params[0], [0.0])


def test_sgd_step_zero_gradient_keeps_params():
    p = np.array([[1.5, -2.0]])
    params, _ = sgd_step([p], [np.zeros_like(p)], lr=0.3, momentum=0.9)
    np.testing.assert_array_equal(params[0], p)


def test_sgd_momentum_two_steps_match_hand_unroll():
    p0, g, lr = np.array([1.0]), np.array([0.5]), 0.1
    p1, v1 = sgd_step([p0], [g], lr, momentum=0.9)
    p2, _ = sgd_step(p1, [g], lr, v1, momentum=0.9)
    v_first = g
    v_second = 0.9 * v_first + g
    expected = p0 - lr * v_first - lr * v_second
    np.testing.assert_allclose(p2[0], expected, rtol=0, atol=1e-15)


def test_sgd_step_shape_mismatch():
    with pytest.raises(DimensionError):
        sgd_step([np.zeros(2)], [np.zeros(3)], lr=0.1)


def test_sgd_missing_gradient_treated_as_zero():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    opt = Sgd([w], SgdConfig(total_steps=3, momentum=0.0))
    lr = opt.step({})
    assert lr == pytest.approx(0.01)
    np.testing.assert_array_equal(w.data, np.ones((2, 2)))


def _train(seed: int) -> np.ndarray:
    gen = make_rng(seed, "train")
    net = Mlp([2, 6, 2], gen)
    opt = Sgd(net.parameters(), SgdConfig(total_steps=5))
    x = gen.normal(size=(8, 2))
    y = (x[:, 0] > 0).astype(int)
    for _ in range(5):
        loss = ops.cross_entropy(ops.softmax_rows(net(Tensor(x))), y)
        opt.step(backward(loss))
    return net.state_vector()


def test_training_is_bit_identical_for_the_same_seed():
    np.testing.assert_array_equal(_train(3), _train(3))


def test_rng_streams_are_independent_and_reproducible():
    a = make_rng(0, "datagen").normal(size=4)
    b = make_rng(0, "datagen").normal(size=4)
    c = make_rng(0, "embed").normal(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_state_payload_round_trip_and_manifest_check():
    gen = make_rng(1, "payload")
    net = Mlp([3, 4, 2], gen)
    payload = state_payload(net)
    other = Mlp([3, 4, 2], make_rng(2, "payload"))
    load_state_payload(other, payload)
    np.testing.assert_array_equal(other.state_vector(), net.state_vector())
    with pytest.raises(DimensionError):
        load_state_payload(Mlp([3, 5, 2], gen), payload)
