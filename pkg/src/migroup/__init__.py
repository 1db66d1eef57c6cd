"""migroup: quantify cross-modal interaction, group datasets by it, emit tuning manifests."""

__version__ = "0.1.0"

from .errors import GroupingConflictError, InputError, MigroupError, ProtocolError, TransportError
from .scoring import CategoryBoundaries, draw_indices, mi_score, score_corpus
from .grouping import distance_matrix, group_by_anchor, group_by_clustering
from .similarity import SimilarityFunction, batch_score, score
from .types import (
    DatasetDescriptor,
    GroupAssignment,
    InstructionInstance,
    MediaRef,
    MiScoreReport,
    PredictionTriplet,
    SamplingPlan,
    validate_dataset,
)

__all__ = [
    "CategoryBoundaries",
    "DatasetDescriptor",
    "GroupAssignment",
    "GroupingConflictError",
    "InputError",
    "InstructionInstance",
    "MediaRef",
    "MigroupError",
    "MiScoreReport",
    "PredictionTriplet",
    "ProtocolError",
    "SamplingPlan",
    "SimilarityFunction",
    "TransportError",
    "batch_score",
    "distance_matrix",
    "draw_indices",
    "group_by_anchor",
    "group_by_clustering",
    "mi_score",
    "score",
    "score_corpus",
    "validate_dataset",
]
