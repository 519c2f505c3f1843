"""Perspective-aware dense retrieval and evaluation."""

from .data import (
    CorpusDoc,
    PerspectiveQuery,
    QrelSet,
    RootQueryGroup,
    TaskBundle,
    load_bundle_dir,
    load_task_bundle,
    strip_perspective,
    validate_balance,
    write_task_bundle,
)
from .evaluation import evaluate_method, generate_synthetic_benchmark, p_recall_at_k, recall_at_k
from .retrieval import batch_retrieve, build_index, build_projected_cache, top_k
from .scoring import QueryParts, ScoringMethod, cosine, reject, score

__version__ = "0.1.0"

__all__ = [
    "CorpusDoc",
    "PerspectiveQuery",
    "QrelSet",
    "QueryParts",
    "RootQueryGroup",
    "ScoringMethod",
    "TaskBundle",
    "batch_retrieve",
    "build_index",
    "build_projected_cache",
    "cosine",
    "evaluate_method",
    "generate_synthetic_benchmark",
    "load_bundle_dir",
    "load_task_bundle",
    "p_recall_at_k",
    "recall_at_k",
    "reject",
    "score",
    "strip_perspective",
    "top_k",
    "validate_balance",
    "write_task_bundle",
]
