from __future__ import annotations

import numpy as np
import pytest

from app.degaa_core.backbone import (
    Backbone,
    CombineMode,
    bundle_features,
    compute_centroids,
    extract,
    neutral_table,
    source_accuracy,
    warmup_train,
)
from app.degaa_core.datagen import Role, default_domain_specs, generate_bundle
from app.degaa_core.domain_embed import DomainEmbeddingTable
from app.degaa_core.errors import DegaaConfigError, DimensionError
from app.degaa_core.numcore import SgdConfig, Tensor, make_rng


def _table(bundle, dim: int = 2) -> DomainEmbeddingTable:
    gen = make_rng(0, "table")
    return DomainEmbeddingTable({d: gen.normal(size=dim) for d in range(bundle.num_domains)})


def _relu(a):
    return np.maximum(a, 0.0)


def test_zero_weights_give_zero_features():
    net = Backbone(3, 2, 2, make_rng(0, "bb"), hidden=(4,), feat_dim=5)
    for p in net.parameters():
        p.data = np.zeros_like(p.data)
    out = extract(np.array([1.0, -2.0, 3.0]), np.array([0.5, 0.5]), net)
    np.testing.assert_array_equal(out, np.zeros(5))


def test_elementwise_mul_with_ones_equals_plain_input():
    gen = make_rng(1, "bb")
    net = Backbone(3, 3, 2, gen, hidden=(4,), feat_dim=5, combine_mode=CombineMode.ELEMENTWISE_MUL)
    x = gen.normal(size=(6, 3))
    np.testing.assert_array_equal(extract(x, np.ones(3), net), net.mlp(Tensor(x)).data)


def test_elementwise_mul_dimension_mismatch_names_mode():
    with pytest.raises(DimensionError, match="elementwise_mul"):
        Backbone(3, 2, 2, make_rng(0, "bb"), combine_mode=CombineMode.ELEMENTWISE_MUL)


def test_concat_features_match_matrix_arithmetic():
    gen = make_rng(2, "bb")
    net = Backbone(3, 2, 4, gen, hidden=(5, 6), feat_dim=3)
    x = gen.normal(size=(7, 3))
    d_e = gen.normal(size=(7, 2))
    h = np.hstack([x, d_e])
    layers = net.mlp.layers
    for layer in layers[:-1]:
        h = _relu(h @ layer.weight.data + layer.bias.data)
    h = h @ layers[-1].weight.data + layers[-1].bias.data
    np.testing.assert_allclose(extract(x, d_e, net), h, rtol=0, atol=1e-12)


def test_combine_rejects_wrong_widths():
    net = Backbone(3, 2, 2, make_rng(0, "bb"))
    with pytest.raises(DimensionError):
        net.features(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_neutral_table_per_mode():
    table = DomainEmbeddingTable({0: np.array([2.0, -1.0]), 1: np.array([0.5, 3.0])})
    np.testing.assert_array_equal(neutral_table(table, CombineMode.CONCAT).lookup([0, 1]), np.zeros((2, 2)))
    np.testing.assert_array_equal(neutral_table(table, CombineMode.ELEMENTWISE_MUL).lookup([0, 1]), np.ones((2, 2)))


def test_zero_steps_leave_parameters_unchanged(small_bundle):
    net = Backbone(small_bundle.in_dim, 2, 3, make_rng(3, "bb"), hidden=(8,), feat_dim=4)
    before = net.state_vector().copy()
    log = warmup_train(small_bundle, _table(small_bundle), net, SgdConfig(), 0, 8, make_rng(0, "w"))
    np.testing.assert_array_equal(net.state_vector(), before)
    assert log.losses == []


def test_missing_domain_embedding_is_config_error(small_bundle):
    net = Backbone(small_bundle.in_dim, 2, 3, make_rng(3, "bb"), hidden=(8,), feat_dim=4)
    table = DomainEmbeddingTable({1: np.zeros(2)})
    with pytest.raises(DegaaConfigError):
        warmup_train(small_bundle, table, net, SgdConfig(), 5, 8, make_rng(0, "w"))


def _warm(bundle, seed: int, steps: int = 60):
    net = Backbone(bundle.in_dim, 2, bundle.shared_classes, make_rng(seed, "bb"), hidden=(16,), feat_dim=8)
    log = warmup_train(bundle, _table(bundle), net, SgdConfig(total_steps=steps), steps, 10, make_rng(seed, "w"))
    return net, log


def test_warmup_is_reproducible(small_bundle):
    net_a, log_a = _warm(small_bundle, 4, steps=10)
    net_b, log_b = _warm(small_bundle, 4, steps=10)
    np.testing.assert_array_equal(net_a.state_vector(), net_b.state_vector())
    assert log_a.losses == log_b.losses


def test_warmup_reduces_loss_on_separable_clusters(small_bundle):
    net, log = _warm(small_bundle, 5, steps=120)
    assert np.mean(log.losses[-10:]) < np.mean(log.losses[:10])
    assert 0.0 <= source_accuracy(small_bundle, _table(small_bundle), net) <= 1.0


def test_warmup_never_reads_target_rows(small_bundle):
    blinded = small_bundle.without_labels()
    # source labels restored; target rows keep nothing
    source = small_bundle.role_indices(Role.SOURCE)
    blinded.labels[source] = small_bundle.labels[source]
    blinded.x[small_bundle.role_indices(Role.TARGET)] = 0.0
    net_a, _ = _warm(small_bundle, 6, steps=10)
    net_b, _ = _warm(blinded, 6, steps=10)
    np.testing.assert_array_equal(net_a.state_vector(), net_b.state_vector())


def test_centroid_of_single_sample_per_class():
    bundle = generate_bundle(1, 1, 2, 0, 1, 3, default_domain_specs(2, 3), seed=0)
    table = _table(bundle)
    net = Backbone(3, 2, 2, make_rng(7, "bb"), hidden=(4,), feat_dim=3)
    cents = compute_centroids(bundle, table, net)
    source = bundle.role_indices(Role.SOURCE)
    feats = bundle_features(bundle, source, table, net)
    for row, c in enumerate(cents.classes):
        np.testing.assert_array_equal(cents.matrix[row], feats[bundle.labels[source] == c][0])


def test_centroid_of_two_samples_is_midpoint():
    bundle = generate_bundle(1, 1, 2, 0, 2, 3, default_domain_specs(2, 3), seed=1)
    table = _table(bundle)
    net = Backbone(3, 2, 2, make_rng(8, "bb"), hidden=(4,), feat_dim=3)
    cents = compute_centroids(bundle, table, net)
    source = bundle.role_indices(Role.SOURCE)
    feats = bundle_features(bundle, source, table, net)
    for row, c in enumerate(cents.classes):
        a, b = feats[bundle.labels[source] == c]
        np.testing.assert_allclose(cents.matrix[row], (a + b) / 2, rtol=0, atol=1e-15)


def test_centroids_match_running_accumulation(four_domain_bundle):
    table = _table(four_domain_bundle)
    net = Backbone(4, 2, 3, make_rng(9, "bb"), hidden=(6,), feat_dim=4)
    cents = compute_centroids(four_domain_bundle, table, net).as_dict()
    sums = {c: np.zeros(4) for c in range(3)}
    counts = {c: 0 for c in range(3)}
    for i in four_domain_bundle.role_indices(Role.SOURCE):
        d_e = table.lookup([four_domain_bundle.domain_ids[i]])[0]
        f = extract(four_domain_bundle.x[i], d_e, net)
        c = int(four_domain_bundle.labels[i])
        sums[c] += f
        counts[c] += 1
    for c in range(3):
        np.testing.assert_allclose(cents[c], sums[c] / counts[c], rtol=0, atol=1e-12)


def test_payload_round_trip(small_bundle):
    net = Backbone(small_bundle.in_dim, 2, 3, make_rng(10, "bb"), hidden=(8,), feat_dim=4)
    restored = Backbone.from_payload(net.to_payload())
    np.testing.assert_array_equal(restored.state_vector(), net.state_vector())
    assert restored.combine_mode is CombineMode.CONCAT
