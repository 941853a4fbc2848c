"""
Domain embeddings.

An MLP G(x; psi) is trained episodically: each episode samples N_t domains,
splits a few points of each into support and query sets, forms one prototype
per domain as the mean embedding of its support set, and minimises the
negative log-likelihood of each query under a softmax over negative squared
distances to the prototypes. No label is ever read. After training, the
kernel mean embedding (mean of G over all of a domain's points) of every
domain is stored in a frozen table.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .datagen import DatasetBundle
from .errors import ContractError, DegaaConfigError, DimensionError
from .numcore import Mlp, Sgd, SgdConfig, Tensor, backward, load_state_payload, ops, state_payload

logger = logging.getLogger(__name__)

StepCallback = Callable[[int, float], None]


@dataclass(frozen=True)
class EpisodeConfig:
    domains_per_episode: int = 4
    support: int = 10
    query: int = 10
    episodes: int = 300

    def __post_init__(self) -> None:
        if self.domains_per_episode < 2:
            raise DegaaConfigError(
                f"domains_per_episode must be >= 2, got {self.domains_per_episode}"
            )
        if self.support < 1 or self.query < 1:
            raise DegaaConfigError(f"support and query must be >= 1, got {self.support}, {self.query}")
        if self.episodes < 0:
            raise DegaaConfigError(f"episodes must be >= 0, got {self.episodes}")


class EmbeddingNet:
    """
    G(x; psi): per-feature input standardisation, an MLP, and (by default) a
    projection of the output onto the unit sphere.

    On the sphere every squared distance lies in [0, 4], so the prototype
    logits stay bounded and table entries have norm at most 1.
    """

    def __init__(
        self,
        in_dim: int,
        d_e_dim: int,
        rng: np.random.Generator,
        hidden: Sequence[int] = (64,),
        unit_sphere: bool = True,
    ) -> None:
        self.mlp = Mlp([in_dim, *hidden, d_e_dim], rng)
        self.unit_sphere = bool(unit_sphere)
        self.input_mean = np.zeros(in_dim)
        self.input_std = np.ones(in_dim)

    @property
    def in_dim(self) -> int:
        return self.mlp.in_dim

    @property
    def out_dim(self) -> int:
        return self.mlp.out_dim

    def fit_input_scaling(self, x: np.ndarray) -> None:
        """Column mean and std of ``x``; constant columns keep unit scale."""
        data = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if data.shape[1] != self.in_dim:
            raise DimensionError(f"fit_input_scaling: data has dimension {data.shape[1]}, net expects {self.in_dim}")
        if data.shape[0] == 0:
            raise ContractError("fit_input_scaling needs at least one row")
        std = data.std(axis=0)
        self.input_mean = data.mean(axis=0)
        self.input_std = np.where(std > 1e-12, std, 1.0)

    def _standardise(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x) - self.input_mean) / self.input_std

    def __call__(self, x: Tensor) -> Tensor:
        out = self.mlp(Tensor(self._standardise(x.data)))
        return ops.l2_normalize_rows(out) if self.unit_sphere else out

    def embed(self, x: np.ndarray) -> np.ndarray:
        return self(Tensor(np.asarray(x, dtype=np.float64))).data

    def parameters(self) -> List[Tensor]:
        return self.mlp.parameters()

    def to_payload(self) -> Dict[str, object]:
        return {
            "kind": "embedding_net",
            "sizes": list(self.mlp.sizes),
            "unit_sphere": self.unit_sphere,
            "input_mean": [float(v) for v in self.input_mean],
            "input_std": [float(v) for v in self.input_std],
            **state_payload(self.mlp),
        }

    @classmethod
    def from_payload(cls, payload: Mapping[str, object]) -> "EmbeddingNet":
        sizes = [int(s) for s in payload["sizes"]]
        # weights are overwritten by the payload
        net = cls(
            sizes[0], sizes[-1], np.random.default_rng(0),
            hidden=sizes[1:-1], unit_sphere=bool(payload.get("unit_sphere", True)),
        )
        mean = np.asarray(payload.get("input_mean", net.input_mean), dtype=np.float64)
        std = np.asarray(payload.get("input_std", net.input_std), dtype=np.float64)
        if mean.shape != (net.in_dim,) or std.shape != (net.in_dim,):
            raise DimensionError(f"input scaling in payload does not match in_dim {net.in_dim}")
        net.input_mean, net.input_std = mean, std
        load_state_payload(net.mlp, dict(payload))
        return net


@dataclass
class Episode:
    domains: List[int]
    support: List[np.ndarray]
    query: List[np.ndarray]


@dataclass
class DomainEmbeddingTable:
    vectors: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(next(iter(self.vectors.values())).shape[0]) if self.vectors else 0

    def __contains__(self, domain_id: int) -> bool:
        return domain_id in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def lookup(self, domain_ids: Sequence[int]) -> np.ndarray:
        """Row-stacked embeddings for a sequence of domain ids."""
        missing = sorted({int(d) for d in domain_ids} - set(self.vectors))
        if missing:
            raise DegaaConfigError(f"domain embedding table has no entry for domains {missing}")
        return np.stack([self.vectors[int(d)] for d in domain_ids]) if len(domain_ids) else np.zeros((0, self.dim))

    def zeros_like(self) -> "DomainEmbeddingTable":
        return DomainEmbeddingTable({d: np.zeros_like(v) for d, v in self.vectors.items()})

    def to_dict(self) -> Dict[str, List[float]]:
        return {str(d): [float(v) for v in vec] for d, vec in sorted(self.vectors.items())}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Sequence[float]]) -> "DomainEmbeddingTable":
        return cls({int(d): np.asarray(v, dtype=np.float64) for d, v in raw.items()})


# ---------------------------------------------------------------------- #
def kme(samples: np.ndarray, net: EmbeddingNet) -> np.ndarray:
    """Mean of G(x) over a non-empty set of points."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.shape[0] == 0 or np.asarray(samples).size == 0:
        raise ContractError("kme needs at least one sample")
    if x.shape[1] != net.in_dim:
        raise DimensionError(f"kme: samples have dimension {x.shape[1]}, net expects {net.in_dim}")
    return net.embed(x).mean(axis=0)


def sample_episode(bundle: DatasetBundle, cfg: EpisodeConfig, rng: np.random.Generator) -> Episode:
    total = bundle.num_domains
    if cfg.domains_per_episode > total:
        raise DegaaConfigError(f"domains_per_episode {cfg.domains_per_episode} exceeds {total} domains")
    need = cfg.support + cfg.query
    counts = bundle.per_domain_counts()
    small = [d for d, c in counts.items() if c < need]
    if small:
        raise DegaaConfigError(f"domains {small} have fewer than support+query={need} points")

    chosen = sorted(int(d) for d in rng.choice(total, size=cfg.domains_per_episode, replace=False))
    support: List[np.ndarray] = []
    query: List[np.ndarray] = []
    for d in chosen:
        idx = bundle.domain_indices(d)
        picked = idx[rng.permutation(idx.size)[:need]]
        support.append(picked[:cfg.support])
        query.append(picked[cfg.support:])
    return Episode(domains=chosen, support=support, query=query)


def prototypical_loss(bundle: DatasetBundle, episode: Episode, net: EmbeddingNet) -> Tensor:
    n_t = len(episode.domains)
    if n_t < 2:
        raise ContractError("prototypical loss needs at least two domains per episode")

    support_idx = np.concatenate(episode.support)
    query_idx = np.concatenate(episode.query)
    sizes = [s.size for s in episode.support]

    # Rows of `averager` take the mean of each domain's support embeddings.
    averager = np.zeros((n_t, support_idx.size))
    offset = 0
    for row, size in enumerate(sizes):
        averager[row, offset:offset + size] = 1.0 / size
        offset += size

    support_emb = net(Tensor(bundle.x[support_idx]))
    prototypes = ops.matmul(Tensor(averager), support_emb)
    query_emb = net(Tensor(bundle.x[query_idx]))
    dist = ops.pairwise_sq_dist(query_emb, prototypes)
    probs = ops.softmax_rows(ops.scale(dist, -1.0))
    targets = np.concatenate([np.full(q.size, pos) for pos, q in enumerate(episode.query)])
    return ops.cross_entropy(probs, targets)


@dataclass
class EmbeddingTrainLog:
    losses: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)


def train_embedding(
    bundle: DatasetBundle,
    cfg: EpisodeConfig,
    sgd: SgdConfig,
    rng: np.random.Generator,
    d_e_dim: int = 32,
    hidden: Sequence[int] = (64,),
    on_step: Optional[StepCallback] = None,
    cancel_check: Optional[Callable[[], None]] = None,
) -> tuple[EmbeddingNet, EmbeddingTrainLog]:
    net = EmbeddingNet(bundle.in_dim, d_e_dim, rng, hidden=hidden)
    # the scaling reads inputs only, never labels
    net.fit_input_scaling(bundle.x)
    opt = Sgd(net.parameters(), sgd)
    log = EmbeddingTrainLog()
    for step in range(cfg.episodes):
        if cancel_check:
            cancel_check()
        episode = sample_episode(bundle, cfg, rng)
        loss = prototypical_loss(bundle, episode, net)
        grads = backward(loss)
        lr = opt.step(grads)
        value = loss.item()
        log.losses.append(value)
        log.learning_rates.append(lr)
        logger.debug("episode %d loss=%.6f lr=%.6f", step, value, lr)
        if on_step:
            on_step(step, value)
    return net, log


def build_embedding_table(bundle: DatasetBundle, net: EmbeddingNet) -> DomainEmbeddingTable:
    vectors: Dict[int, np.ndarray] = {}
    for d in range(bundle.num_domains):
        idx = bundle.domain_indices(d)
        if idx.size == 0:
            continue
        vectors[d] = kme(bundle.x[idx], net)
    return DomainEmbeddingTable(vectors)
