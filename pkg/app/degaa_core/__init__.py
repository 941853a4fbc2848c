from .ablation import AblationReport, build_variants, run_ablation
from .adapt import AdaptConfig, Evaluation, adaptation_loss, adaptation_step, evaluate, run_adaptation
from .backbone import Backbone, Centroids, CombineMode, compute_centroids, extract, warmup_train
from .config import (
    ALL_STAGES,
    AblationName,
    RunConfig,
    StageName,
    config_from_dict,
    config_hash,
    config_to_dict,
    parse_config,
)
from .datagen import DatasetBundle, DomainSpec, Role, generate_bundle, iterate_batches
from .domain_embed import DomainEmbeddingTable, EmbeddingNet, EpisodeConfig, build_embedding_table, kme, train_embedding
from .engine import PipelineEngine, PipelineResult, run_seeds
from .errors import (
    ArtifactIOError,
    ContractError,
    DegaaConfigError,
    DegaaError,
    DimensionError,
    MissingPrerequisiteError,
    NumericError,
    PipelineCancelled,
)
from .gaa import Aggregation, GaaNetwork, GraphBatch, gaa_forward
from .metrics import Metrics, compute_metrics
from .openset import LofConfig, PseudoLabelSet, assign_pseudo_labels, lof_scores, split_known_unknown

__all__ = [
    # Config
    "RunConfig",
    "AblationName",
    "StageName",
    "ALL_STAGES",
    "parse_config",
    "config_from_dict",
    "config_to_dict",
    "config_hash",
    # Engine
    "PipelineEngine",
    "PipelineResult",
    "run_seeds",
    "AblationReport",
    "build_variants",
    "run_ablation",
    # Model
    "DatasetBundle",
    "DomainSpec",
    "Role",
    "generate_bundle",
    "iterate_batches",
    "EmbeddingNet",
    "EpisodeConfig",
    "DomainEmbeddingTable",
    "kme",
    "train_embedding",
    "build_embedding_table",
    "Backbone",
    "Centroids",
    "CombineMode",
    "extract",
    "warmup_train",
    "compute_centroids",
    "LofConfig",
    "PseudoLabelSet",
    "lof_scores",
    "split_known_unknown",
    "assign_pseudo_labels",
    "Aggregation",
    "GaaNetwork",
    "GraphBatch",
    "gaa_forward",
    "AdaptConfig",
    "Evaluation",
    "adaptation_loss",
    "adaptation_step",
    "run_adaptation",
    "evaluate",
    "Metrics",
    "compute_metrics",
    # Errors
    "DegaaError",
    "DegaaConfigError",
    "DimensionError",
    "NumericError",
    "ContractError",
    "MissingPrerequisiteError",
    "ArtifactIOError",
    "PipelineCancelled",
]
