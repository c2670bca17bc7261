"""Interactive attribute-guided search over embedded item collections."""

from .data import (
    AttributeSchema,
    Dataset,
    Item,
    QueryTargetPair,
    Triplet,
    benchmark_schema,
    generate_synthetic,
    load_dataset,
    sample_query_target_pairs,
    sample_triplets,
    sample_triplets_per_attribute,
    save_dataset,
)
from .dqn import (
    DqnConfig,
    QNetwork,
    ReplayBuffer,
    compute_reward,
    load_qnet,
    save_qnet,
    train_dqn,
)
from .eer import (
    PlattParams,
    eer_rerank,
    fit_platt,
    load_platt,
    model_entropy,
    platt_fit,
    save_platt,
)
from .embedding import (
    EmbeddingConfig,
    EmbeddingModel,
    ablation_trio,
    adaptive_margin,
    csn_loss,
    embed,
    global_weight,
    load_model,
    masked_distance,
    per_attribute_satisfaction,
    satisfaction_rate,
    save_model,
    train,
    triplet_loss,
)
from .errors import (
    AttrSearchError,
    ConfigError,
    DatasetParseError,
    SamplingError,
    TrainingDivergenceError,
)
from .index import SearchIndex
from .selection import (
    Constraint,
    ConstraintSet,
    constraint_score,
    fcs_select,
    nn_select,
    satisfied_counts,
    update_constraints,
)
from .session import (
    STRATEGIES,
    SessionRuntime,
    benchmark,
    load_benchmark_report,
    load_session_logs,
    rank_curve_table,
    rank_database,
    run_session,
    save_benchmark_report,
    save_session_logs,
)

__version__ = "1.0.0"

__all__ = [
    "AttributeSchema",
    "Dataset",
    "Item",
    "QueryTargetPair",
    "Triplet",
    "benchmark_schema",
    "generate_synthetic",
    "load_dataset",
    "sample_query_target_pairs",
    "sample_triplets",
    "sample_triplets_per_attribute",
    "save_dataset",
    "DqnConfig",
    "QNetwork",
    "ReplayBuffer",
    "compute_reward",
    "load_qnet",
    "save_qnet",
    "train_dqn",
    "PlattParams",
    "eer_rerank",
    "fit_platt",
    "load_platt",
    "model_entropy",
    "platt_fit",
    "save_platt",
    "EmbeddingConfig",
    "EmbeddingModel",
    "ablation_trio",
    "adaptive_margin",
    "csn_loss",
    "embed",
    "global_weight",
    "load_model",
    "masked_distance",
    "per_attribute_satisfaction",
    "satisfaction_rate",
    "save_model",
    "train",
    "triplet_loss",
    "AttrSearchError",
    "ConfigError",
    "DatasetParseError",
    "SamplingError",
    "TrainingDivergenceError",
    "SearchIndex",
    "Constraint",
    "ConstraintSet",
    "constraint_score",
    "fcs_select",
    "nn_select",
    "satisfied_counts",
    "update_constraints",
    "STRATEGIES",
    "SessionRuntime",
    "benchmark",
    "load_benchmark_report",
    "load_session_logs",
    "rank_curve_table",
    "rank_database",
    "run_session",
    "save_benchmark_report",
    "save_session_logs",
    "__version__",
]
