"""Noise-robust K-class recommendation.

Learns interaction classifiers from noisy rating labels by distilling
high-confidence Bayes labels, weighting them with a two-component Gaussian
mixture over reliability features, and training an instance-conditioned
label transition matrix that corrects the classification loss.
"""

from .data import (
    ColumnSchema,
    InteractionDataset,
    InteractionRecord,
    SplitSpec,
    TestFilter,
    filter_test_set,
    load_splits,
    parse_interactions,
    save_splits,
    split_dataset,
)
from .distillation import DistilledSample, DistilledSet, ThresholdSchedule, distill, utilization
from .evaluation import (
    VarianceReport,
    evaluate_matrix,
    evaluate_ranking,
    ndcg_at_k,
    rank_items,
    recall_at_k,
    variance_comparison,
)
from .exceptions import ConfigError, NumericError, ParseError
from .noise import NoiseSpec, inject_noise, l1_matrix_error, pairflip_matrix, symmetric_matrix
from .reliability import (
    ReliabilityMixture,
    build_features,
    cooccurrence_feature,
    effective_sample_size,
    fit_gmm,
    reliability_weight,
)
from .training import (
    TransitionCorrectedClassifier,
    calibrated_transition_loss,
    combined_objective,
    corrected_classification_loss,
    transition_loss,
)

__version__ = "0.1.0"

__all__ = [
    "ColumnSchema",
    "ConfigError",
    "DistilledSample",
    "DistilledSet",
    "InteractionDataset",
    "InteractionRecord",
    "NoiseSpec",
    "NumericError",
    "ParseError",
    "ReliabilityMixture",
    "SplitSpec",
    "TestFilter",
    "ThresholdSchedule",
    "TransitionCorrectedClassifier",
    "VarianceReport",
    "build_features",
    "calibrated_transition_loss",
    "combined_objective",
    "cooccurrence_feature",
    "corrected_classification_loss",
    "distill",
    "effective_sample_size",
    "evaluate_matrix",
    "evaluate_ranking",
    "filter_test_set",
    "fit_gmm",
    "inject_noise",
    "l1_matrix_error",
    "load_splits",
    "ndcg_at_k",
    "pairflip_matrix",
    "parse_interactions",
    "rank_items",
    "recall_at_k",
    "reliability_weight",
    "save_splits",
    "split_dataset",
    "symmetric_matrix",
    "transition_loss",
    "utilization",
    "variance_comparison",
]
