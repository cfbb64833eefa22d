"""Scikit-learn style estimator facade over the training engine.

Wraps hierarchy handling, vocabulary construction, embedding initialization
and the training loop behind the familiar fit / predict_proba / predict
surface so the classifier composes with the wider ecosystem (pipelines,
parameter search, cloning).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .classifier import forward_document
from .corpus import (
    Document,
    build_vocabulary,
    encode_document,
    level_targets,
    random_embeddings,
)
from .hierarchy import LabelHierarchy, ancestor_closure, build_hierarchy, load_hierarchy
from .metrics import auprc_of
from .training import TrainConfig, train


def _as_documents(X, y, hier: LabelHierarchy) -> list[Document]:
    docs = []
    for i, tokens in enumerate(X):
        labels = ancestor_closure(y[i], hier) if y is not None else frozenset()
        docs.append(Document(id=f"doc{i}", tokens=tuple(tokens), labels=labels))
    return docs


def _validate_token_lists(X):
    if not hasattr(X, "__len__") or isinstance(X, (str, bytes)):
        raise ValueError("X must be a sequence of token sequences")
    for i, tokens in enumerate(X):
        if isinstance(tokens, (str, bytes)) or not hasattr(tokens, "__len__"):
            raise ValueError(f"X[{i}] must be a sequence of token strings")
        if len(tokens) == 0:
            raise ValueError(f"X[{i}] is empty; documents need at least one token")
        if not all(isinstance(t, str) for t in tokens):
            raise ValueError(f"X[{i}] contains non-string tokens")


class HierAttnClassifier(BaseEstimator, ClassifierMixin):
    """Hierarchical multi-label text classifier with label-based attention.

    Parameters mirror :class:`~hierattn.training.TrainConfig`; ``hierarchy``
    may be a list of (parent, child) edges, a hierarchy file path, or a
    prebuilt :class:`~hierattn.hierarchy.LabelHierarchy`.

    X is a sequence of token sequences; y a sequence of label-name
    collections (any subset whose ancestor closure is the true label set).

    >>> clf = HierAttnClassifier(hierarchy=[("root", "a"), ("a", "b")])
    >>> clf.fit(X, y).predict_proba(X)   # doctest: +SKIP
    """

    def __init__(
        self,
        hierarchy=None,
        embed_dim: int = 32,
        components: int = 8,
        max_len: int = 64,
        learning_rate: float = 1e-3,
        optimizer: str = "adam",
        batch_size: int = 32,
        max_epochs: int = 100,
        patience: int = 10,
        alpha: float = 0.5,
        variant: str = "full",
        min_count: int = 1,
        threshold: float = 0.5,
        seed: int = 0,
    ):
        self.hierarchy = hierarchy
        self.embed_dim = embed_dim
        self.components = components
        self.max_len = max_len
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.alpha = alpha
        self.variant = variant
        self.min_count = min_count
        self.threshold = threshold
        self.seed = seed

    def _build_hierarchy(self) -> LabelHierarchy:
        if isinstance(self.hierarchy, LabelHierarchy):
            return self.hierarchy
        if isinstance(self.hierarchy, str):
            return load_hierarchy(self.hierarchy)
        if self.hierarchy is None:
            raise ValueError("hierarchy is required: edges, file path, or LabelHierarchy")
        return build_hierarchy(self.hierarchy)

    def fit(self, X, y, validation_data=None):
        """Train on token lists X and label collections y.

        ``validation_data`` is an optional (X_val, y_val) pair; by default
        the training set itself drives early stopping.
        """
        _validate_token_lists(X)
        if len(X) != len(y):
            raise ValueError(f"len(X)={len(X)} != len(y)={len(y)}")
        hier = self._build_hierarchy()
        docs = _as_documents(X, y, hier)
        if validation_data is None:
            valid_docs = docs
        else:
            X_val, y_val = validation_data
            _validate_token_lists(X_val)
            valid_docs = _as_documents(X_val, y_val, hier)

        cfg = TrainConfig(
            seed=self.seed,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            max_len=self.max_len,
            embed_dim=self.embed_dim,
            components=self.components,
            alpha=self.alpha,
            variant=self.variant,
            min_count=self.min_count,
        )
        vocab = build_vocabulary(docs, min_count=cfg.min_count)
        embeddings = random_embeddings(vocab, cfg.embed_dim, seed=cfg.seed)
        self.model_, self.history_ = train(cfg, docs, valid_docs, hier, vocab, embeddings)
        self.hierarchy_ = hier
        self.vocabulary_ = vocab
        self.classes_ = list(hier.global_label_order())
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "This HierAttnClassifier instance is not fitted yet; call fit first."
            )

    def predict_proba(self, X) -> np.ndarray:
        """Blended label scores, shape (n_samples, n_labels), columns = classes_."""
        self._check_fitted()
        _validate_token_lists(X)
        out = np.zeros((len(X), len(self.classes_)))
        tape = self.model_.tape
        for i, tokens in enumerate(X):
            doc = Document(id=f"q{i}", tokens=tuple(tokens), labels=frozenset())
            ids, mask = encode_document(doc, self.vocabulary_, self.model_.config.max_len)
            with tape.no_grad():
                scores, _ = forward_document(ids, mask, self.model_)
            out[i] = scores.blended_values()
        return out

    def predict(self, X) -> np.ndarray:
        """Binary indicator matrix at the configured threshold."""
        return (self.predict_proba(X) >= self.threshold).astype(np.int64)

    def score(self, X, y) -> float:
        """Pooled area under the precision-recall curve on (X, y)."""
        self._check_fitted()
        proba = self.predict_proba(X)
        hier = self.hierarchy_
        docs = _as_documents(X, y, hier)
        truths = np.concatenate([np.concatenate(level_targets(d, hier)) for d in docs])
        return auprc_of(proba.reshape(-1), truths)
