"""Fairness-aware spam detection on tripartite review graphs."""

from .augment import (
    MIXUP_VARIANTS,
    AugmentedView,
    EdgeMask,
    MixupPair,
    mixup_partner_set,
    mixup_predict,
    mixup_source_set,
    prune_nonspam_edges,
    replicate_mixed_users,
    sample_mixup_pairs,
    view_edges,
)
from .datagen import GenConfig, PRESETS, generate, preset
from .errors import FairRankError
from .estimators import FairSpamDetector, MixedUserScorer
from .graph import (
    FAVORED,
    PRODUCT,
    PROTECTED,
    REVIEW,
    TEST,
    TRAIN,
    USER,
    VALID,
    GroupAssignment,
    ReviewGraph,
    Split,
    assign_groups,
    assign_subgroups,
    build_graph,
    nearest_rank_percentile,
    split_users,
)
from .graph_io import read_graph, read_groups, write_graph
from .losses import (
    detection_loss,
    detector_objective,
    fairness_regularizer,
    subgroup_loss,
)
from .metrics import MetricsReport, afrr, auc, delta_ndcg, ndcg
from .nn import (
    ModelParams,
    Propagation,
    backward,
    forward,
    grad_check,
    init_params,
    load_params,
    mean_propagation,
    propagation_for_graph,
    save_params,
)
from .train import (
    APRIME_SOURCES,
    EpochContext,
    TrainedModels,
    TrainingConfig,
    assign_aprime_baseline,
    detector_gradients,
    evaluate,
    expand_features,
    joint_gradients,
    run_experiment,
    train,
    train_detector_only,
    train_joint,
    train_pretrained,
)

__version__ = "0.1.0"

__all__ = [
    "APRIME_SOURCES",
    "AugmentedView",
    "EdgeMask",
    "EpochContext",
    "FAVORED",
    "FairRankError",
    "FairSpamDetector",
    "GenConfig",
    "GroupAssignment",
    "MIXUP_VARIANTS",
    "MetricsReport",
    "MixedUserScorer",
    "MixupPair",
    "ModelParams",
    "PRESETS",
    "PRODUCT",
    "PROTECTED",
    "Propagation",
    "REVIEW",
    "ReviewGraph",
    "Split",
    "TEST",
    "TRAIN",
    "TrainedModels",
    "TrainingConfig",
    "USER",
    "VALID",
    "afrr",
    "assign_aprime_baseline",
    "assign_groups",
    "assign_subgroups",
    "auc",
    "backward",
    "build_graph",
    "delta_ndcg",
    "detection_loss",
    "detector_gradients",
    "detector_objective",
    "evaluate",
    "expand_features",
    "fairness_regularizer",
    "forward",
    "generate",
    "grad_check",
    "init_params",
    "joint_gradients",
    "load_params",
    "mean_propagation",
    "mixup_partner_set",
    "mixup_predict",
    "mixup_source_set",
    "ndcg",
    "nearest_rank_percentile",
    "preset",
    "propagation_for_graph",
    "prune_nonspam_edges",
    "read_graph",
    "read_groups",
    "replicate_mixed_users",
    "run_experiment",
    "sample_mixup_pairs",
    "save_params",
    "split_users",
    "subgroup_loss",
    "train",
    "train_detector_only",
    "train_joint",
    "train_pretrained",
    "view_edges",
    "write_graph",
]
