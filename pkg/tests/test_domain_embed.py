from __future__ import annotations

import math

import numpy as np
import pytest

from app.degaa_core.config import RunConfig
from app.degaa_core.datagen import DomainSpec, default_domain_specs, generate_bundle
from app.degaa_core.domain_embed import (
    DomainEmbeddingTable,
    EmbeddingNet,
    Episode,
    EpisodeConfig,
    build_embedding_table,
    kme,
    prototypical_loss,
    sample_episode,
    train_embedding,
)
from app.degaa_core.errors import ContractError, DegaaConfigError, DimensionError
from app.degaa_core.numcore import SgdConfig, make_rng


def _even_bundle(per_class: int = 5):
    # two domains of identical size: 2 shared classes, no private ones
    return generate_bundle(1, 1, 2, 0, per_class, 3, default_domain_specs(2, 3), seed=0)


def _identity_net(dim: int) -> EmbeddingNet:
    net = EmbeddingNet(dim, dim, make_rng(0, "id"), hidden=(), unit_sphere=False)
    layer = net.mlp.layers[0]
    layer.weight.data = np.eye(dim)
    layer.bias.data = np.zeros((1, dim))
    return net


def test_kme_identity_net_is_arithmetic_mean():
    out = kme(np.array([[1.0, 0.0], [0.0, 1.0]]), _identity_net(2))
    np.testing.assert_allclose(out, [0.5, 0.5])


def test_kme_invariant_under_duplication():
    gen = make_rng(4, "kme")
    net = EmbeddingNet(3, 5, gen, hidden=(7,))
    pts = gen.normal(size=(20, 3))
    np.testing.assert_allclose(kme(np.vstack([pts, pts]), net), kme(pts, net), rtol=0, atol=1e-12)


def test_kme_matches_per_sample_forward():
    gen = make_rng(5, "kme")
    net = EmbeddingNet(3, 4, gen, hidden=(6,))
    pts = gen.normal(size=(50, 3))
    expected = np.mean([net.embed(p[None, :])[0] for p in pts], axis=0)
    np.testing.assert_allclose(kme(pts, net), expected, rtol=0, atol=1e-12)


def test_kme_errors():
    net = _identity_net(2)
    with pytest.raises(ContractError):
        kme(np.zeros((0, 2)), net)
    with pytest.raises(DimensionError):
        kme(np.zeros((3, 4)), net)


def test_episode_with_all_domains_and_full_split():
    bundle = _even_bundle()
    cfg = EpisodeConfig(domains_per_episode=2, support=4, query=6, episodes=1)
    episode = sample_episode(bundle, cfg, make_rng(0, "ep"))
    assert episode.domains == [0, 1]
    for d, support, query in zip(episode.domains, episode.support, episode.query):
        assert len(support) == 4 and len(query) == 6
        assert set(support.tolist()).isdisjoint(query.tolist())
        assert sorted(support.tolist() + query.tolist()) == bundle.domain_indices(d).tolist()


def test_undersized_domain_is_config_error():
    cfg = EpisodeConfig(domains_per_episode=2, support=8, query=8)
    with pytest.raises(DegaaConfigError):
        sample_episode(_even_bundle(), cfg, make_rng(0, "ep"))


def test_episode_config_rejects_single_domain():
    with pytest.raises(DegaaConfigError):
        EpisodeConfig(domains_per_episode=1)


def test_constant_embedding_gives_log_two():
    bundle = _even_bundle()
    net = EmbeddingNet(3, 4, make_rng(1, "c"), hidden=(5,))
    last = net.mlp.layers[-1]
    last.weight.data = np.zeros_like(last.weight.data)
    last.bias.data = np.array([[1.0, -2.0, 0.5, 3.0]])
    episode = sample_episode(bundle, EpisodeConfig(2, 3, 3), make_rng(2, "ep"))
    assert prototypical_loss(bundle, episode, net).item() == pytest.approx(math.log(2.0), rel=1e-12)


def test_well_separated_domains_give_near_zero_loss():
    bundle = _even_bundle()
    # domain 1 pushed far away from domain 0
    bundle.x[bundle.domain_indices(1)] += 1e3
    episode = sample_episode(bundle, EpisodeConfig(2, 3, 3), make_rng(2, "ep"))
    loss = prototypical_loss(bundle, episode, _identity_net(3)).item()
    assert loss < 1e-12


def test_prototypical_loss_matches_scalar_reimplementation():
    bundle = _even_bundle()
    net = EmbeddingNet(3, 4, make_rng(6, "net"), hidden=(5,))
    episode = sample_episode(bundle, EpisodeConfig(2, 3, 4), make_rng(7, "ep"))

    protos = [net.embed(bundle.x[s]).mean(axis=0) for s in episode.support]
    total, count = 0.0, 0
    for pos, q in enumerate(episode.query):
        for i in q:
            e = net.embed(bundle.x[i][None, :])[0]
            neg = [-float(np.sum((e - p) ** 2)) for p in protos]
            top = max(neg)
            log_norm = top + math.log(sum(math.exp(v - top) for v in neg))
            total += -(neg[pos] - log_norm)
            count += 1
    expected = total / count
    assert prototypical_loss(bundle, episode, net).item() == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_prototypical_loss_needs_two_domains():
    bundle = _even_bundle()
    episode = Episode(domains=[0], support=[bundle.domain_indices(0)[:2]], query=[bundle.domain_indices(0)[2:4]])
    with pytest.raises(ContractError):
        prototypical_loss(bundle, episode, _identity_net(3))


def test_zero_episodes_returns_initial_net(four_domain_bundle):
    cfg = EpisodeConfig(domains_per_episode=2, support=3, query=3, episodes=0)
    net, log = train_embedding(four_domain_bundle, cfg, SgdConfig(), make_rng(8, "embed"), d_e_dim=4, hidden=(6,))
    fresh = EmbeddingNet(4, 4, make_rng(8, "embed"), hidden=(6,))
    np.testing.assert_array_equal(net.mlp.state_vector(), fresh.mlp.state_vector())
    assert log.losses == []


def test_training_is_deterministic_and_label_blind(four_domain_bundle):
    cfg = EpisodeConfig(domains_per_episode=3, support=3, query=3, episodes=5)

    def run(bundle):
        net, log = train_embedding(bundle, cfg, SgdConfig(total_steps=5), make_rng(9, "embed"), d_e_dim=4, hidden=(6,))
        return net.mlp.state_vector(), log.losses

    params_a, losses_a = run(four_domain_bundle)
    params_b, losses_b = run(four_domain_bundle)
    params_c, losses_c = run(four_domain_bundle.without_labels())
    np.testing.assert_array_equal(params_a, params_b)
    np.testing.assert_array_equal(params_a, params_c)
    assert losses_a == losses_b == losses_c
    assert all(np.isfinite(losses_a))


def test_table_entries_and_identical_domains():
    bundle = _even_bundle()
    bundle.x[bundle.domain_indices(1)] = bundle.x[bundle.domain_indices(0)]
    net = EmbeddingNet(3, 4, make_rng(10, "net"), hidden=(5,))
    table = build_embedding_table(bundle, net)
    assert len(table) == 2 and table.dim == 4
    np.testing.assert_array_equal(table.vectors[0], table.vectors[1])
    np.testing.assert_allclose(table.vectors[0], kme(bundle.x[bundle.domain_indices(0)], net))


def test_table_lookup_and_serialisation():
    table = DomainEmbeddingTable({0: np.array([1.0, 2.0]), 1: np.array([3.0, 4.0])})
    np.testing.assert_array_equal(table.lookup([1, 0, 1]), [[3.0, 4.0], [1.0, 2.0], [3.0, 4.0]])
    restored = DomainEmbeddingTable.from_dict(table.to_dict())
    np.testing.assert_array_equal(restored.lookup([0, 1]), table.lookup([0, 1]))
    with pytest.raises(DegaaConfigError):
        table.lookup([2])


def test_net_payload_round_trip():
    net = EmbeddingNet(3, 4, make_rng(11, "net"), hidden=(5,))
    restored = EmbeddingNet.from_payload(net.to_payload())
    pts = make_rng(12, "pts").normal(size=(6, 3))
    np.testing.assert_array_equal(restored.embed(pts), net.embed(pts))


def test_episode_domains_are_drawn_uniformly(four_domain_bundle):
    cfg = EpisodeConfig(domains_per_episode=2, support=3, query=3)
    gen = make_rng(13, "ep")
    draws = 1000
    counts = np.zeros(four_domain_bundle.num_domains)
    for _ in range(draws):
        counts[sample_episode(four_domain_bundle, cfg, gen).domains] += 1
    p = cfg.domains_per_episode / four_domain_bundle.num_domains
    sigma = math.sqrt(draws * p * (1 - p))
    assert counts.sum() == draws * cfg.domains_per_episode
    assert np.all(np.abs(counts - draws * p) <= 3 * sigma)


def _corner_bundle():
    # four domains that differ only by a shift along the two non-ring axes
    shifts = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0), (4.0, 4.0)]
    specs = [DomainSpec(translation=(0.0, 0.0, a, b), noise_sigma=0.5) for a, b in shifts]
    return generate_bundle(2, 2, 3, 1, 8, 4, specs, seed=5)


def test_training_loss_falls_on_shifted_domains():
    cfg = EpisodeConfig(domains_per_episode=4, support=3, query=3, episodes=300)
    _, log = train_embedding(
        _corner_bundle(), cfg, SgdConfig(total_steps=300), make_rng(14, "embed"), d_e_dim=8, hidden=(16,)
    )
    assert all(np.isfinite(log.losses))
    assert np.mean(log.losses[-50:]) < np.mean(log.losses[:50])


def test_unit_sphere_outputs_and_table_norms():
    bundle = _corner_bundle()
    net = EmbeddingNet(4, 6, make_rng(15, "net"), hidden=(8,))
    net.fit_input_scaling(bundle.x)
    np.testing.assert_allclose(np.linalg.norm(net.embed(bundle.x), axis=1), 1.0, rtol=1e-12)
    table = build_embedding_table(bundle, net)
    assert all(np.linalg.norm(v) <= 1.0 + 1e-12 for v in table.vectors.values())


def test_input_scaling_survives_payload_round_trip():
    gen = make_rng(16, "scale")
    pts = gen.normal(loc=5.0, scale=[1.0, 10.0, 0.1], size=(40, 3))
    pts[:, 2] = 7.0
    net = EmbeddingNet(3, 4, gen, hidden=(5,))
    net.fit_input_scaling(pts)
    assert net.input_std[2] == 1.0
    np.testing.assert_allclose(net._standardise(pts)[:, :2].std(axis=0), 1.0, rtol=1e-12)
    restored = EmbeddingNet.from_payload(net.to_payload())
    np.testing.assert_array_equal(restored.input_mean, net.input_mean)
    np.testing.assert_array_equal(restored.embed(pts), net.embed(pts))
    with pytest.raises(DimensionError):
        net.fit_input_scaling(np.zeros((4, 2)))
    with pytest.raises(ContractError):
        net.fit_input_scaling(np.zeros((0, 3)))


@pytest.mark.slow
def test_desk_embedding_loss_trends_down():
    cfg = RunConfig()
    data = cfg.data
    bundle = generate_bundle(
        data.n_sources, data.n_targets, data.shared_classes, data.private_classes,
        data.per_class, data.in_dim, data.specs(), seed=0, radius=data.radius,
    )
    episodes = cfg.embed.episode_config(bundle.num_domains)
    _, log = train_embedding(
        bundle, episodes, cfg.embed.optim.sgd(episodes.episodes), make_rng(0, "embed"),
        d_e_dim=cfg.embed.d_e_dim, hidden=cfg.embed.hidden,
    )
    assert all(np.isfinite(log.losses))
    assert np.mean(log.losses[-100:]) < np.mean(log.losses[:100])
