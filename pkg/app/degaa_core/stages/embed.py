from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..artifacts import EMBED_LOG, EMBEDDING_NET, EMBEDDING_TABLE, ArtifactStore
from ..config import RunConfig
from ..domain_embed import build_embedding_table, train_embedding
from ..numcore import make_rng
from .common import CancelCheck, WarnCallback, load_bundle


@dataclass
class EmbedStats:
    episodes: int = 0
    final_loss: Optional[float] = None
    domains: int = 0
    files_written: int = 0


def run(
    cfg: RunConfig,
    store: ArtifactStore,
    cancel_check: CancelCheck = None,
    warn: WarnCallback = None,
) -> EmbedStats:
    # Training must never see labels; the stripped copy makes that structural.
    bundle = load_bundle(store).without_labels()
    episode_cfg = cfg.embed.episode_config(bundle.num_domains)
    if warn and episode_cfg.domains_per_episode < cfg.embed.domains_per_episode:
        warn(
            f"only {bundle.num_domains} domains; episodes use {episode_cfg.domains_per_episode} "
            f"instead of {cfg.embed.domains_per_episode}"
        )
    net, log = train_embedding(
        bundle,
        episode_cfg,
        cfg.embed.optim.sgd(episode_cfg.episodes),
        make_rng(cfg.seed, "embed"),
        d_e_dim=cfg.embed.d_e_dim,
        hidden=cfg.embed.hidden,
        cancel_check=cancel_check,
    )
    table = build_embedding_table(bundle, net)

    store.write_json(EMBEDDING_NET, {"network": net.to_payload()})
    store.write_json(EMBEDDING_TABLE, {"dim": table.dim, "vectors": table.to_dict()})
    store.write_csv(
        EMBED_LOG,
        ["episode", "loss", "lr"],
        ([i, loss, lr] for i, (loss, lr) in enumerate(zip(log.losses, log.learning_rates))),
    )
    return EmbedStats(
        episodes=len(log.losses),
        final_loss=log.losses[-1] if log.losses else None,
        domains=len(table),
        files_written=3,
    )
