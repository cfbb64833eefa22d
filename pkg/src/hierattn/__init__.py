"""Hierarchical multi-label text classification with label-based attention."""

from .corpus import (
    Batch,
    Document,
    EmbeddingTable,
    Vocabulary,
    build_vocabulary,
    encode_batch,
    load_corpus,
    load_embeddings,
    random_embeddings,
)
from .estimator import HierAttnClassifier
from .hierarchy import (
    LabelHierarchy,
    ancestor_closure,
    build_hierarchy,
    labels_at_level,
    load_hierarchy,
)
from .metrics import ScoredSet, au_prc, evaluate, pr_curve
from .training import (
    ModelParams,
    TrainConfig,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "Document",
    "EmbeddingTable",
    "HierAttnClassifier",
    "LabelHierarchy",
    "ModelParams",
    "ScoredSet",
    "TrainConfig",
    "Vocabulary",
    "ancestor_closure",
    "au_prc",
    "build_hierarchy",
    "build_vocabulary",
    "encode_batch",
    "evaluate",
    "init_params",
    "labels_at_level",
    "load_checkpoint",
    "load_corpus",
    "load_embeddings",
    "load_hierarchy",
    "pr_curve",
    "random_embeddings",
    "save_checkpoint",
    "train",
]
