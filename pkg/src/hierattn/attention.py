"""Label-based attention over document words, one pass per hierarchy level.

Each level relates words to labels through a set of learned anonymous
component vectors: words are scored against components, labels are softly
associated with components, and the product of the two gives one attention
distribution over the words per label. Label-wise document embeddings are
pooled twice, once after confidence masking (the local path feeding the next
level) and once raw (the global path).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeMismatch
from .tensor import Matrix

VARIANT_FULL = "full"
VARIANT_NO_COMPONENT = "no_component"


@dataclass
class LevelParams:
    """Trainable tensors of one hierarchy level.

    ``label_emb`` row order matches ``labels_at_level`` for this level.
    ``fw``/``fl`` project (enriched) words and labels into component space,
    ``fm`` turns the previous level's local embedding into label confidence
    logits, and ``W``/``b`` map attended word vectors to label-wise document
    embeddings.
    """

    components: Matrix    # m x d_c
    label_emb: Matrix     # q x d
    fw_W: Matrix          # 2d x d_c
    fw_b: Matrix          # 1 x d_c
    fl_W: Matrix          # d x d_c
    fl_b: Matrix          # 1 x d_c
    fm_W: Matrix          # d x d
    fm_b: Matrix          # 1 x d
    W: Matrix             # d x d
    b: Matrix             # 1 x d

    @property
    def num_labels(self) -> int:
        return self.label_emb.rows

    @property
    def embed_dim(self) -> int:
        return self.label_emb.cols


@dataclass
class LevelTrace:
    """Per-level intermediates kept for inspection and explanation.

    ``S`` and ``Rtilde`` are None for the no-component variant, which scores
    labels against words directly.
    """

    S: Matrix | None          # N x m word-component relevance
    Rtilde: Matrix | None     # q x m label-component association, rows sum to 1
    A: Matrix                 # q x N attention, rows sum to 1 over unmasked words
    D: Matrix                 # q x d label-wise document embeddings
    m: Matrix                 # q x 1 label confidence, all ones at level 1
    Dtilde: Matrix            # q x d confidence-masked embeddings
    v_local: Matrix           # d x 1 pooled masked embedding
    v_global: Matrix          # d x 1 pooled raw embedding


def enrich_words(I: Matrix, v_local_prev: Matrix | None) -> Matrix:
    """Prefix every word vector with the previous level's local embedding.

    At level 1 there is no previous embedding and the first d columns are
    zeros, keeping the word projection shape uniform across levels.
    """
    n, d = I.rows, I.cols
    if v_local_prev is None:
        prefix = Matrix(np.zeros((n, d)))
    else:
        if v_local_prev.shape != (d, 1):
            raise ShapeMismatch(
                f"previous local embedding {v_local_prev.shape}, expected {(d, 1)}"
            )
        prefix = T.tile_rows(T.transpose(v_local_prev), n)
    return T.concat_cols([prefix, I])


def component_word_relevance(Ih: Matrix, lp: LevelParams, activation: str = "tanh") -> Matrix:
    """Score each (word, component) pair: projected word dotted with component."""
    proj = _project(Ih, lp.fw_W, lp.fw_b, activation)
    return T.matmul(proj, T.transpose(lp.components))


def label_component_association(lp: LevelParams, activation: str = "tanh") -> Matrix:
    """Row-softmaxed label-component relevance; each label's row sums to 1."""
    proj = _project(lp.label_emb, lp.fl_W, lp.fl_b, activation)
    scores = T.matmul(proj, T.transpose(lp.components))
    return T.row_softmax(scores)


def label_attention(Rtilde: Matrix, S: Matrix, pad_mask) -> Matrix:
    """Attention over word positions per label; padding gets exactly zero."""
    return T.row_softmax_masked(T.matmul(Rtilde, T.transpose(S)), pad_mask)


def label_document_embeddings(A: Matrix, I: Matrix, lp: LevelParams) -> Matrix:
    """Attended word vectors mapped through the per-level affine layer + relu.

    Note this consumes the base word embeddings, not the enriched ones.
    """
    return T.relu(T.affine(T.matmul(A, I), lp.W, lp.b))


def label_mask(v_local_prev: Matrix | None, lp: LevelParams, leaky_slope: float = 0.01) -> Matrix:
    """Confidence score per label from the previous level's local embedding.

    Level 1 (no previous embedding) is all ones. Otherwise the previous
    embedding goes through an affine layer with LeakyReLU, then each label
    embedding is dotted against it and squashed with a sigmoid.
    """
    q = lp.num_labels
    if v_local_prev is None:
        return Matrix(np.ones((q, 1)))
    if v_local_prev.shape != (lp.embed_dim, 1):
        raise ShapeMismatch(
            f"previous local embedding {v_local_prev.shape}, expected {(lp.embed_dim, 1)}"
        )
    u = T.leaky_relu(T.affine(T.transpose(v_local_prev), lp.fm_W, lp.fm_b), leaky_slope)
    return T.sigmoid(T.matmul(lp.label_emb, T.transpose(u)))


def apply_label_mask(D: Matrix, m: Matrix) -> Matrix:
    """Scale each label's embedding row by its confidence."""
    return T.scale_rows(D, m)


def pool_local_global(Dtilde: Matrix, D: Matrix) -> tuple[Matrix, Matrix]:
    """Column-wise means of the masked and raw embeddings, as d x 1 vectors."""
    v_local = T.row_average(T.transpose(Dtilde))
    v_global = T.row_average(T.transpose(D))
    return v_local, v_global


def level_forward(
    I: Matrix,
    pad_mask,
    v_local_prev: Matrix | None,
    lp: LevelParams,
    variant: str = VARIANT_FULL,
    activation: str = "tanh",
    leaky_slope: float = 0.01,
) -> LevelTrace:
    """Run one level of the attention module and return all intermediates."""
    Ih = enrich_words(I, v_local_prev)
    if variant == VARIANT_NO_COMPONENT:
        # Labels score words directly, skipping the component factorization.
        word_proj = _project(Ih, lp.fw_W, lp.fw_b, activation)
        label_proj = _project(lp.label_emb, lp.fl_W, lp.fl_b, activation)
        S = None
        Rtilde = None
        A = T.row_softmax_masked(T.matmul(label_proj, T.transpose(word_proj)), pad_mask)
    elif variant == VARIANT_FULL:
        S = component_word_relevance(Ih, lp, activation)
        Rtilde = label_component_association(lp, activation)
        A = label_attention(Rtilde, S, pad_mask)
    else:
        raise ValueError(f"unknown attention variant {variant!r}")
    D = label_document_embeddings(A, I, lp)
    m = label_mask(v_local_prev, lp, leaky_slope)
    Dtilde = apply_label_mask(D, m)
    v_local, v_global = pool_local_global(Dtilde, D)
    return LevelTrace(
        S=S, Rtilde=Rtilde, A=A, D=D, m=m, Dtilde=Dtilde,
        v_local=v_local, v_global=v_global,
    )


def _project(x: Matrix, W: Matrix, b: Matrix, activation: str) -> Matrix:
    out = T.affine(x, W, b)
    if activation == "tanh":
        return T.tanh(out)
    if activation == "linear":
        return out
    raise ValueError(f"unknown projection activation {activation!r}")
