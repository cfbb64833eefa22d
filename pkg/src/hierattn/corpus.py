"""Document ingestion, vocabulary, word embeddings, and batch encoding.

Corpus files are JSON lines: one object per line with keys ``id`` (string),
``tokens`` (non-empty array of strings) and ``labels`` (array of label
names). Tokenization happens upstream; label sets are ancestor-closed on
load rather than trusted.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatch,
    DuplicateIdError,
    EmptyCorpus,
    ParseError,
)
from .hierarchy import LabelHierarchy, ancestor_closure

PAD = 0
UNK = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


@dataclass(frozen=True)
class Document:
    id: str
    tokens: tuple[str, ...]
    labels: frozenset[str]


@dataclass(frozen=True)
class Vocabulary:
    """Token to index map with reserved PAD=0 and UNK=1 entries."""

    index: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.index)

    def encode(self, token: str) -> int:
        return self.index.get(token, UNK)

    def tokens_in_order(self) -> list[str]:
        return sorted(self.index, key=self.index.__getitem__)


@dataclass(frozen=True)
class EmbeddingTable:
    """V x d word vectors; row 0 (PAD) is all zeros and stays untrained."""

    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


@dataclass
class Batch:
    token_ids: np.ndarray            # B x N int64
    mask: np.ndarray                 # B x N, 1 for real tokens, 0 for padding
    targets: list[np.ndarray] | None  # per level: B x q_h in {0, 1}


def load_corpus(path, hier: LabelHierarchy) -> list[Document]:
    """Read a JSON-lines corpus; label sets are ancestor-closed on load.

    Raises ParseError (with line number), UnknownLabelError for labels absent
    from ``hier`` and DuplicateIdError for repeated document ids.
    """
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid record ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ParseError(f"{path}:{lineno}: record is not an object")
            doc_id = rec.get("id")
            tokens = rec.get("tokens")
            labels = rec.get("labels")
            if not isinstance(doc_id, str) or not doc_id:
                raise ParseError(f"{path}:{lineno}: missing or invalid 'id'")
            if (not isinstance(tokens, list) or not tokens
                    or not all(isinstance(t, str) for t in tokens)):
                raise ParseError(f"{path}:{lineno}: 'tokens' must be a non-empty string array")
            if not isinstance(labels, list) or not all(isinstance(l, str) for l in labels):
                raise ParseError(f"{path}:{lineno}: 'labels' must be a string array")
            if doc_id in seen:
                raise DuplicateIdError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
            seen.add(doc_id)
            closed = ancestor_closure(labels, hier)
            docs.append(Document(id=doc_id, tokens=tuple(tokens), labels=closed))
    return docs


def save_corpus(docs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            rec = {"id": doc.id, "tokens": list(doc.tokens), "labels": sorted(doc.labels)}
            fh.write(json.dumps(rec) + "\n")


def build_vocabulary(docs, min_count: int = 1) -> Vocabulary:
    """Index tokens with frequency >= min_count, frequency-then-lexicographic."""
    if not docs:
        raise EmptyCorpus("no documents to build a vocabulary from")
    counts = Counter(t for doc in docs for t in doc.tokens)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    index = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
    for i, tok in enumerate(kept, start=2):
        index[tok] = i
    return Vocabulary(index=index)


def random_embeddings(vocab: Vocabulary, dim: int, seed: int = 0) -> EmbeddingTable:
    """Uniform [-0.1, 0.1] vectors for every token; PAD row zero."""
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-0.1, 0.1, size=(vocab.size, dim))
    vectors[PAD, :] = 0.0
    return EmbeddingTable(vectors=vectors)


def load_embeddings(path, vocab: Vocabulary, dim: int, seed: int = 0) -> EmbeddingTable:
    """Load word vectors in the text format ``token v1 ... vd``.

    An optional first header line carries two integers (count and dimension).
    Vocabulary tokens present in the file take the file vector; missing
    tokens and UNK get seeded uniform [-0.1, 0.1] rows; PAD stays zero.
    """
    file_vecs: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header line
                except ValueError:
                    pass
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DimMismatch(
                    f"{path}:{lineno}: expected {dim} values, got {len(values)}"
                )
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric vector value") from None
            if token in vocab.index:
                file_vecs[token] = vec

    rng = np.random.default_rng(seed)
    vectors = np.zeros((vocab.size, dim))
    for token in vocab.tokens_in_order():
        idx = vocab.index[token]
        if idx == PAD:
            continue
        if token in file_vecs:
            vectors[idx] = file_vecs[token]
        else:
            vectors[idx] = rng.uniform(-0.1, 0.1, size=dim)
    return EmbeddingTable(vectors=vectors)


def level_targets(doc: Document, hier: LabelHierarchy) -> list[np.ndarray]:
    """One {0,1} vector per level, ordered by ``labels_at_level``."""
    out = []
    for h in range(1, hier.depth + 1):
        row = np.array(
            [1.0 if label in doc.labels else 0.0 for label in hier.labels_at_level(h)]
        )
        out.append(row)
    return out


def encode_document(
    doc: Document, vocab: Vocabulary, max_len: int
) -> tuple[np.ndarray, np.ndarray]:
    """Index-encode one document, truncated to ``max_len``, without padding."""
    ids = np.array([vocab.encode(t) for t in doc.tokens[:max_len]], dtype=np.int64)
    return ids, np.ones(len(ids))


def encode_batch(
    docs,
    vocab: Vocabulary,
    hier: LabelHierarchy,
    max_len: int,
    with_targets: bool = True,
) -> Batch:
    """Pad/truncate documents to a common grid and build per-level targets.

    Tokens beyond ``max_len`` are dropped from the tail; shorter documents
    are right-padded with PAD, mirrored by zeros in the mask.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    n_docs = len(docs)
    token_ids = np.zeros((n_docs, max_len), dtype=np.int64)
    mask = np.zeros((n_docs, max_len))
    for i, doc in enumerate(docs):
        ids, _ = encode_document(doc, vocab, max_len)
        token_ids[i, : len(ids)] = ids
        mask[i, : len(ids)] = 1.0
    targets = None
    if with_targets:
        targets = [
            np.zeros((n_docs, len(hier.labels_at_level(h))))
            for h in range(1, hier.depth + 1)
        ]
        for i, doc in enumerate(docs):
            for h_idx, row in enumerate(level_targets(doc, hier)):
                targets[h_idx][i] = row
    return Batch(token_ids=token_ids, mask=mask, targets=targets)
