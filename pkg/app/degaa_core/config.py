from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

from .adapt import AdaptConfig, EvalSourceMode
from .backbone import CombineMode
from .datagen import DEFAULT_PRIVATE_SPREAD, DomainSpec, default_domain_specs
from .domain_embed import EpisodeConfig
from .errors import DegaaConfigError
from .gaa import Aggregation
from .numcore import SgdConfig
from .openset import LofConfig

# ------------------------------------------------------------------ #
# Stage and ablation names
# ------------------------------------------------------------------ #
StageName = Literal["gen", "embed", "warmup", "adapt", "eval"]

ALL_STAGES: List[StageName] = ["gen", "embed", "warmup", "adapt", "eval"]


class AblationName(str, Enum):
    EMBEDDING = "embedding"
    COMBINE = "combine"
    AGGREGATION = "aggregation"
    LOF_DIM = "lof_dim"
    LABEL_CURVE = "label_curve"
    LAMBDA = "lambda"
    BASELINE = "baseline"
    UNKNOWN_RATIO = "unknown_ratio"
    SETTINGS = "settings"


DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "resources" / "desk_benchmark.json"


# ------------------------------------------------------------------ #
# Sections
# ------------------------------------------------------------------ #
@dataclass(frozen=True)
class OptimConfig:
    """Optimizer settings of one stage; the step count comes from the stage."""
    lr_max: float = 0.01
    lr_min: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0

    def sgd(self, total_steps: int) -> SgdConfig:
        return SgdConfig(
            lr_max=self.lr_max,
            lr_min=self.lr_min,
            total_steps=max(1, total_steps),
            momentum=self.momentum,
            weight_decay=self.weight_decay,
        )


@dataclass(frozen=True)
class DataConfig:
    n_sources: int = 2
    n_targets: int = 2
    shared_classes: int = 6
    private_classes: int = 3
    per_class: int = 50
    in_dim: int = 16
    radius: float = 10.0
    private_spread: float = DEFAULT_PRIVATE_SPREAD
    domain_specs: Optional[Tuple[DomainSpec, ...]] = None  # None: generated defaults

    def specs(self) -> List[DomainSpec]:
        if self.domain_specs is not None:
            return list(self.domain_specs)
        return default_domain_specs(self.n_sources + self.n_targets, self.in_dim, self.n_sources)


@dataclass(frozen=True)
class EmbedConfig:
    d_e_dim: int = 32
    hidden: Tuple[int, ...] = (64,)
    domains_per_episode: int = 4
    support: int = 10
    query: int = 10
    episodes: int = 300
    optim: OptimConfig = field(default_factory=OptimConfig)

    def episode_config(self, num_domains: int) -> EpisodeConfig:
        return EpisodeConfig(
            domains_per_episode=min(self.domains_per_episode, num_domains),
            support=self.support,
            query=self.query,
            episodes=self.episodes,
        )


@dataclass(frozen=True)
class WarmupConfig:
    steps: int = 500
    batch_size: int = 32
    hidden: Tuple[int, ...] = (64, 64)
    feat_dim: int = 32
    combine_mode: CombineMode = CombineMode.CONCAT
    use_domain_embedding: bool = True
    optim: OptimConfig = field(default_factory=OptimConfig)


@dataclass(frozen=True)
class GaaConfig:
    layers: int = 3
    heads: int = 2
    aggregation: Aggregation = Aggregation.ATTENTION
    scaled_attention: bool = False
    strict_intra: bool = False


@dataclass(frozen=True)
class AdaptSection:
    lam: float = 0.5
    refresh_period: int = 50
    iterations: int = 20
    source_batch: int = 32
    target_batch: int = 192
    refresh_centroids: bool = True
    resample_per_episode: bool = False
    eval_source_mode: EvalSourceMode = EvalSourceMode.CENTROIDS
    optim: OptimConfig = field(default_factory=lambda: OptimConfig(lr_max=0.005, lr_min=0.0005))

    def adapt_config(self) -> AdaptConfig:
        return AdaptConfig(
            lam=self.lam,
            refresh_period=self.refresh_period,
            iterations=self.iterations,
            source_batch=self.source_batch,
            target_batch=self.target_batch,
            refresh_centroids=self.refresh_centroids,
            resample_per_episode=self.resample_per_episode,
            eval_source_mode=self.eval_source_mode,
        )


@dataclass(frozen=True)
class AblationConfig:
    lof_dims: Tuple[int, ...] = (8, 16, 32, 64)
    lambdas: Tuple[float, ...] = (0.0, 0.1, 0.5, 1.0)
    unknown_counts: Tuple[int, ...] = (0, 1, 3)
    settings: Tuple[Tuple[int, int], ...] = ((1, 1), (1, 2), (2, 1), (2, 2))


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    warmup: WarmupConfig = field(default_factory=WarmupConfig)
    gaa: GaaConfig = field(default_factory=GaaConfig)
    lof: LofConfig = field(default_factory=LofConfig)
    adapt: AdaptSection = field(default_factory=AdaptSection)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    seed: int = 0

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)


# ------------------------------------------------------------------ #
# Parsing helpers
# ------------------------------------------------------------------ #
def _load_json(path: Path) -> dict:
    try:
        with path.open("r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError as exc:
        raise DegaaConfigError(f"Config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DegaaConfigError(f"Config file is not valid JSON: {path} (line {exc.lineno}: {exc.msg})") from exc
    if not isinstance(raw, dict):
        raise DegaaConfigError(f"Config root must be a JSON object: {path}")
    return raw


def _section(raw: Dict[str, Any], name: str, allowed: Sequence[str]) -> Dict[str, Any]:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise DegaaConfigError(f"'{name}' must be an object")
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        raise DegaaConfigError(f"Unknown keys in '{name}': {', '.join(unknown)}")
    return value


def _int(raw: Dict[str, Any], where: str, key: str, default: int, minimum: Optional[int] = None) -> int:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise DegaaConfigError(f"{where}.{key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise DegaaConfigError(f"{where}.{key} must be >= {minimum}, got {value}")
    return value


def _float(raw: Dict[str, Any], where: str, key: str, default: float) -> float:
    value = raw.get(key, default)
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DegaaConfigError(f"{where}.{key} must be a number, got {value!r}")
    return float(value)


def _bool(raw: Dict[str, Any], where: str, key: str, default: bool) -> bool:
    value = raw.get(key, default)
    if not isinstance(value, bool):
        raise DegaaConfigError(f"{where}.{key} must be true or false, got {value!r}")
    return value


def _enum(raw: Dict[str, Any], where: str, key: str, enum_cls, default):
    value = raw.get(key, default)
    try:
        return enum_cls(value)
    except ValueError as exc:
        allowed = ", ".join(e.value for e in enum_cls)
        raise DegaaConfigError(f"{where}.{key} must be one of {allowed}, got {value!r}") from exc


def _int_tuple(raw: Dict[str, Any], where: str, key: str, default: Sequence[int], minimum: int = 1) -> Tuple[int, ...]:
    value = raw.get(key, list(default))
    if not isinstance(value, list):
        raise DegaaConfigError(f"{where}.{key} must be a list of integers")
    indexed = {str(i): v for i, v in enumerate(value)}
    return tuple(_int(indexed, f"{where}.{key}", str(i), 0, minimum) for i in range(len(value)))


def _parse_optim(raw: Dict[str, Any], where: str, default: OptimConfig) -> OptimConfig:
    sec = _section(raw, "sgd", ("lr_max", "lr_min", "momentum", "weight_decay"))
    where = f"{where}.sgd"
    optim = OptimConfig(
        lr_max=_float(sec, where, "lr_max", default.lr_max),
        lr_min=_float(sec, where, "lr_min", default.lr_min),
        momentum=_float(sec, where, "momentum", default.momentum),
        weight_decay=_float(sec, where, "weight_decay", default.weight_decay),
    )
    optim.sgd(1)  # validates the ranges
    return optim


def _parse_domain_spec(raw: object, index: int) -> DomainSpec:
    if not isinstance(raw, dict):
        raise DegaaConfigError(f"data.domain_specs[{index}] must be an object")
    unknown = sorted(set(raw) - {"rotation", "translation", "scale", "noise_sigma"})
    if unknown:
        raise DegaaConfigError(f"Unknown keys in data.domain_specs[{index}]: {', '.join(unknown)}")
    where = f"data.domain_specs[{index}]"
    translation = raw.get("translation", [])
    if not isinstance(translation, list):
        raise DegaaConfigError(f"{where}.translation must be a list of numbers")
    return DomainSpec(
        rotation=_float(raw, where, "rotation", 0.0),
        translation=tuple(_float({"t": t}, where, "t", 0.0) for t in translation),
        scale=_float(raw, where, "scale", 1.0),
        noise_sigma=_float(raw, where, "noise_sigma", 0.5),
    )


# ------------------------------------------------------------------ #
# Public API
# ------------------------------------------------------------------ #
def config_from_dict(raw: Dict[str, Any]) -> RunConfig:
    if not isinstance(raw, dict):
        raise DegaaConfigError("Config root must be an object")
    unknown = sorted(set(raw) - {"data", "embed", "warmup", "gaa", "lof", "adapt", "ablation", "seed"})
    if unknown:
        raise DegaaConfigError(f"Unknown top-level keys: {', '.join(unknown)}")

    d0 = DataConfig()
    sec = _section(raw, "data", ("n_sources", "n_targets", "shared_classes", "private_classes",
                                 "per_class", "in_dim", "radius", "private_spread", "domain_specs"))
    specs_raw = sec.get("domain_specs")
    if specs_raw is not None and not isinstance(specs_raw, list):
        raise DegaaConfigError("data.domain_specs must be a list or null")
    data = DataConfig(
        n_sources=_int(sec, "data", "n_sources", d0.n_sources, 1),
        n_targets=_int(sec, "data", "n_targets", d0.n_targets, 1),
        shared_classes=_int(sec, "data", "shared_classes", d0.shared_classes, 2),
        private_classes=_int(sec, "data", "private_classes", d0.private_classes, 0),
        per_class=_int(sec, "data", "per_class", d0.per_class, 1),
        in_dim=_int(sec, "data", "in_dim", d0.in_dim, 2),
        radius=_float(sec, "data", "radius", d0.radius),
        private_spread=_float(sec, "data", "private_spread", d0.private_spread),
        domain_specs=None if specs_raw is None else tuple(
            _parse_domain_spec(s, i) for i, s in enumerate(specs_raw)
        ),
    )
    if data.radius <= 0 or data.private_spread <= 0:
        raise DegaaConfigError(
            f"data.radius and data.private_spread must be > 0, got {data.radius} and {data.private_spread}"
        )
    if data.domain_specs is not None and len(data.domain_specs) != data.n_sources + data.n_targets:
        raise DegaaConfigError(
            f"data.domain_specs has {len(data.domain_specs)} entries, expected n_sources + n_targets = "
            f"{data.n_sources + data.n_targets}"
        )

    e0 = EmbedConfig()
    sec = _section(raw, "embed", ("d_e_dim", "hidden", "domains_per_episode", "support", "query", "episodes", "sgd"))
    embed = EmbedConfig(
        d_e_dim=_int(sec, "embed", "d_e_dim", e0.d_e_dim, 1),
        hidden=_int_tuple(sec, "embed", "hidden", e0.hidden),
        domains_per_episode=_int(sec, "embed", "domains_per_episode", e0.domains_per_episode, 2),
        support=_int(sec, "embed", "support", e0.support, 1),
        query=_int(sec, "embed", "query", e0.query, 1),
        episodes=_int(sec, "embed", "episodes", e0.episodes, 0),
        optim=_parse_optim(sec, "embed", e0.optim),
    )

    w0 = WarmupConfig()
    sec = _section(raw, "warmup", ("steps", "batch_size", "hidden", "feat_dim", "combine_mode",
                                   "use_domain_embedding", "sgd"))
    warmup = WarmupConfig(
        steps=_int(sec, "warmup", "steps", w0.steps, 0),
        batch_size=_int(sec, "warmup", "batch_size", w0.batch_size, 1),
        hidden=_int_tuple(sec, "warmup", "hidden", w0.hidden),
        feat_dim=_int(sec, "warmup", "feat_dim", w0.feat_dim, 1),
        combine_mode=_enum(sec, "warmup", "combine_mode", CombineMode, w0.combine_mode.value),
        use_domain_embedding=_bool(sec, "warmup", "use_domain_embedding", w0.use_domain_embedding),
        optim=_parse_optim(sec, "warmup", w0.optim),
    )
    if warmup.combine_mode is CombineMode.ELEMENTWISE_MUL and embed.d_e_dim != data.in_dim:
        raise DegaaConfigError(
            f"combine_mode=elementwise_mul needs embed.d_e_dim == data.in_dim, got {embed.d_e_dim} and {data.in_dim}"
        )

    g0 = GaaConfig()
    sec = _section(raw, "gaa", ("layers", "heads", "aggregation", "scaled_attention", "strict_intra"))
    gaa = GaaConfig(
        layers=_int(sec, "gaa", "layers", g0.layers, 1),
        heads=_int(sec, "gaa", "heads", g0.heads, 1),
        aggregation=_enum(sec, "gaa", "aggregation", Aggregation, g0.aggregation.value),
        scaled_attention=_bool(sec, "gaa", "scaled_attention", g0.scaled_attention),
        strict_intra=_bool(sec, "gaa", "strict_intra", g0.strict_intra),
    )
    if warmup.feat_dim % gaa.heads:
        raise DegaaConfigError(f"warmup.feat_dim {warmup.feat_dim} must be divisible by gaa.heads {gaa.heads}")

    l0 = LofConfig()
    sec = _section(raw, "lof", ("k", "threshold", "epsilon", "lof_dim"))
    lof_dim = sec.get("lof_dim")
    lof = LofConfig(
        k=_int(sec, "lof", "k", l0.k, 1),
        threshold=_float(sec, "lof", "threshold", l0.threshold),
        epsilon=_float(sec, "lof", "epsilon", l0.epsilon),
        lof_dim=None if lof_dim is None else _int(sec, "lof", "lof_dim", 0, 1),
    )
    if not lof.threshold > 1.0:
        raise DegaaConfigError(f"lof.threshold must be > 1, got {lof.threshold}")

    a0 = AdaptSection()
    sec = _section(raw, "adapt", ("lambda", "K", "iterations", "source_batch", "target_batch",
                                  "refresh_centroids", "resample_per_episode", "eval_source_mode", "sgd"))
    lam = _float(sec, "adapt", "lambda", a0.lam)
    if not (lam >= 0 and math.isfinite(lam)):
        raise DegaaConfigError(f"adapt.lambda must be a finite number >= 0, got {lam}")
    adapt = AdaptSection(
        lam=lam,
        refresh_period=_int(sec, "adapt", "K", a0.refresh_period, 1),
        iterations=_int(sec, "adapt", "iterations", a0.iterations, 0),
        source_batch=_int(sec, "adapt", "source_batch", a0.source_batch, 1),
        target_batch=_int(sec, "adapt", "target_batch", a0.target_batch, 2),
        refresh_centroids=_bool(sec, "adapt", "refresh_centroids", a0.refresh_centroids),
        resample_per_episode=_bool(sec, "adapt", "resample_per_episode", a0.resample_per_episode),
        eval_source_mode=_enum(sec, "adapt", "eval_source_mode", EvalSourceMode, a0.eval_source_mode.value),
        optim=_parse_optim(sec, "adapt", a0.optim),
    )

    b0 = AblationConfig()
    sec = _section(raw, "ablation", ("lof_dims", "lambdas", "unknown_counts", "settings"))
    lambdas = sec.get("lambdas", list(b0.lambdas))
    if not isinstance(lambdas, list):
        raise DegaaConfigError("ablation.lambdas must be a list of numbers")
    settings_raw = sec.get("settings", [list(s) for s in b0.settings])
    if not isinstance(settings_raw, list) or any(not isinstance(s, list) or len(s) != 2 for s in settings_raw):
        raise DegaaConfigError("ablation.settings must be a list of [n_sources, n_targets] pairs")
    ablation = AblationConfig(
        lof_dims=_int_tuple(sec, "ablation", "lof_dims", b0.lof_dims),
        lambdas=tuple(_float({"v": v}, "ablation.lambdas", "v", 0.0) for v in lambdas),
        unknown_counts=_int_tuple(sec, "ablation", "unknown_counts", b0.unknown_counts, 0),
        settings=tuple(
            (_int({"n": s[0]}, "ablation.settings", "n", 1, 1), _int({"m": s[1]}, "ablation.settings", "m", 1, 1))
            for s in settings_raw
        ),
    )
    if any(not (v >= 0 and math.isfinite(v)) for v in ablation.lambdas):
        raise DegaaConfigError("ablation.lambdas must all be finite numbers >= 0")

    return RunConfig(
        data=data,
        embed=embed,
        warmup=warmup,
        gaa=gaa,
        lof=lof,
        adapt=adapt,
        ablation=ablation,
        seed=_int(raw, "config", "seed", 0, 0),
    )


def parse_config(path: Path) -> RunConfig:
    return config_from_dict(_load_json(Path(path)))


def _optim_dict(optim: OptimConfig) -> dict:
    return {
        "lr_max": optim.lr_max,
        "lr_min": optim.lr_min,
        "momentum": optim.momentum,
        "weight_decay": optim.weight_decay,
    }


def config_to_dict(cfg: RunConfig) -> Dict[str, Any]:
    return {
        "data": {
            "n_sources": cfg.data.n_sources,
            "n_targets": cfg.data.n_targets,
            "shared_classes": cfg.data.shared_classes,
            "private_classes": cfg.data.private_classes,
            "per_class": cfg.data.per_class,
            "in_dim": cfg.data.in_dim,
            "radius": cfg.data.radius,
            "private_spread": cfg.data.private_spread,
            "domain_specs": None if cfg.data.domain_specs is None else [s.to_dict() for s in cfg.data.domain_specs],
        },
        "embed": {
            "d_e_dim": cfg.embed.d_e_dim,
            "hidden": list(cfg.embed.hidden),
            "domains_per_episode": cfg.embed.domains_per_episode,
            "support": cfg.embed.support,
            "query": cfg.embed.query,
            "episodes": cfg.embed.episodes,
            "sgd": _optim_dict(cfg.embed.optim),
        },
        "warmup": {
            "steps": cfg.warmup.steps,
            "batch_size": cfg.warmup.batch_size,
            "hidden": list(cfg.warmup.hidden),
            "feat_dim": cfg.warmup.feat_dim,
            "combine_mode": cfg.warmup.combine_mode.value,
            "use_domain_embedding": cfg.warmup.use_domain_embedding,
            "sgd": _optim_dict(cfg.warmup.optim),
        },
        "gaa": {
            "layers": cfg.gaa.layers,
            "heads": cfg.gaa.heads,
            "aggregation": cfg.gaa.aggregation.value,
            "scaled_attention": cfg.gaa.scaled_attention,
            "strict_intra": cfg.gaa.strict_intra,
        },
        "lof": {
            "k": cfg.lof.k,
            "threshold": "inf" if math.isinf(cfg.lof.threshold) else cfg.lof.threshold,
            "epsilon": cfg.lof.epsilon,
            "lof_dim": cfg.lof.lof_dim,
        },
        "adapt": {
            "lambda": cfg.adapt.lam,
            "K": cfg.adapt.refresh_period,
            "iterations": cfg.adapt.iterations,
            "source_batch": cfg.adapt.source_batch,
            "target_batch": cfg.adapt.target_batch,
            "refresh_centroids": cfg.adapt.refresh_centroids,
            "resample_per_episode": cfg.adapt.resample_per_episode,
            "eval_source_mode": cfg.adapt.eval_source_mode.value,
            "sgd": _optim_dict(cfg.adapt.optim),
        },
        "ablation": {
            "lof_dims": list(cfg.ablation.lof_dims),
            "lambdas": list(cfg.ablation.lambdas),
            "unknown_counts": list(cfg.ablation.unknown_counts),
            "settings": [list(s) for s in cfg.ablation.settings],
        },
        "seed": cfg.seed,
    }


def config_hash(cfg: RunConfig) -> str:
    """First 16 hex chars of SHA-256 over the canonical config JSON, seed excluded."""
    payload = config_to_dict(cfg)
    payload.pop("seed")
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
