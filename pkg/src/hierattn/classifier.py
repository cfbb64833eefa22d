"""Local and global classification heads, losses, and prediction blending.

The local head scores each level's labels against their masked document
embeddings; the global head runs a two-layer MLP over the concatenation of
all levels' pooled embeddings. Both are trained jointly and their scores are
blended with a fixed weight at prediction time.

Global output order is levels ascending, labels in hierarchy-file order.
Targets fed to ``global_loss`` must follow the same order; nothing at runtime
can detect a scrambled target vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import LevelTrace, LevelParams, VARIANT_FULL, VARIANT_NO_COMPONENT, level_forward
from .errors import ShapeMismatch
from .tensor import Matrix

VARIANTS = ("full", "nc", "local_only", "global_only")


@dataclass
class GlobalHeadParams:
    """Two-layer MLP from the stacked global embeddings to all labels."""

    W1: Matrix   # (H d) x d_hidden
    b1: Matrix   # 1 x d_hidden
    W2: Matrix   # d_hidden x M
    b2: Matrix   # 1 x M


@dataclass
class PredictionScores:
    """All score vectors for one document.

    ``local`` holds one q_h x 1 column per level; ``global_scores`` and
    ``blended`` are M x 1 in global output order.
    """

    local: list[Matrix]
    global_scores: Matrix
    blended: Matrix
    v_global_concat: Matrix   # (H d) x 1

    def blended_values(self) -> np.ndarray:
        return self.blended.data[:, 0].copy()

    def local_values(self) -> np.ndarray:
        return np.concatenate([p.data[:, 0] for p in self.local])

    def global_values(self) -> np.ndarray:
        return self.global_scores.data[:, 0].copy()


def local_predict(Dtilde: Matrix, label_emb: Matrix) -> Matrix:
    """sigmoid of each label's embedding row dotted with its own label vector.

    Rowwise paired dots, not a full matmul.
    """
    return T.sigmoid(T.row_dot(Dtilde, label_emb))


def local_loss(p_levels_batch, z_levels_batch) -> Matrix:
    """Summed BCE over every level and document, divided by batch size.

    ``p_levels_batch``: per document, the list of per-level score columns.
    ``z_levels_batch``: per document, the matching {0,1} target vectors.
    """
    n_docs = len(p_levels_batch)
    if n_docs == 0 or n_docs != len(z_levels_batch):
        raise ShapeMismatch("batch score/target lists disagree")
    total = None
    for p_levels, z_levels in zip(p_levels_batch, z_levels_batch):
        for p, z in zip(p_levels, z_levels):
            term = T.bce_sum(p, np.asarray(z).reshape(-1, 1))
            total = term if total is None else T.add(total, term)
    return T.scale(total, 1.0 / n_docs)


def global_embed(v_globals) -> Matrix:
    """Stack the per-level pooled embeddings, levels ascending."""
    v_globals = list(v_globals)
    if not v_globals:
        raise ShapeMismatch("no level embeddings to concatenate")
    d = v_globals[0].rows
    for v in v_globals:
        if v.shape != (d, 1):
            raise ShapeMismatch(f"level embedding {v.shape}, expected {(d, 1)}")
    return T.concat_rows(v_globals)


def global_predict(v_g: Matrix, gp: GlobalHeadParams) -> Matrix:
    """Two-layer MLP with relu hidden layer and sigmoid output, as M x 1."""
    if v_g.shape != (gp.W1.rows, 1):
        raise ShapeMismatch(f"global embedding {v_g.shape}, expected {(gp.W1.rows, 1)}")
    hidden = T.relu(T.affine(T.transpose(v_g), gp.W1, gp.b1))
    logits = T.affine(hidden, gp.W2, gp.b2)
    return T.transpose(T.sigmoid(logits))


def global_loss(p_g_batch, z_all_batch) -> Matrix:
    """Summed BCE of global scores against stacked targets, per document mean."""
    n_docs = len(p_g_batch)
    if n_docs == 0 or n_docs != len(z_all_batch):
        raise ShapeMismatch("batch score/target lists disagree")
    total = None
    for p_g, z_all in zip(p_g_batch, z_all_batch):
        term = T.bce_sum(p_g, np.asarray(z_all).reshape(-1, 1))
        total = term if total is None else T.add(total, term)
    return T.scale(total, 1.0 / n_docs)


def total_loss(local: Matrix, global_: Matrix) -> Matrix:
    """Unweighted sum of the two loss terms."""
    return T.add(local, global_)


def combine_predictions(p_levels, p_g: Matrix, alpha: float) -> Matrix:
    """Blend stacked local scores with global scores: alpha local + (1-alpha) global."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    p_local = T.concat_rows(list(p_levels))
    if p_local.shape != p_g.shape:
        raise ShapeMismatch(f"local {p_local.shape} vs global {p_g.shape}")
    return T.add(T.scale(p_local, alpha), T.scale(p_g, 1.0 - alpha))


def forward_document(
    token_ids,
    pad_mask,
    params,
    alpha: float | None = None,
    variant: str | None = None,
) -> tuple[PredictionScores, list[LevelTrace]]:
    """Full forward pass for one encoded document.

    ``params`` is a :class:`~hierattn.training.ModelParams`. The variant only
    selects the attention flavor here; local/global-only variants change
    which losses are optimized, not the forward outputs, which are always
    fully populated.
    """
    cfg = params.config
    if alpha is None:
        alpha = cfg.alpha
    if variant is None:
        variant = cfg.variant
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    attn_variant = VARIANT_NO_COMPONENT if variant == "nc" else VARIANT_FULL

    I = T.embedding_lookup(params.embedding, token_ids)
    traces: list[LevelTrace] = []
    p_levels: list[Matrix] = []
    v_prev: Matrix | None = None
    for lp in params.levels:
        trace = level_forward(
            I, pad_mask, v_prev, lp,
            variant=attn_variant,
            activation=cfg.relevance_activation,
            leaky_slope=cfg.leaky_slope,
        )
        p_levels.append(local_predict(trace.Dtilde, lp.label_emb))
        v_prev = trace.v_local
        traces.append(trace)

    v_g = global_embed([t.v_global for t in traces])
    p_g = global_predict(v_g, params.global_head)
    blended = combine_predictions(p_levels, p_g, alpha)
    scores = PredictionScores(
        local=p_levels,
        global_scores=p_g,
        blended=blended,
        v_global_concat=v_g,
    )
    return scores, traces
