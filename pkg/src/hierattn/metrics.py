"""Area under the micro-pooled precision-recall curve.

All (score, truth) pairs across labels and documents are pooled into one
confusion count per threshold. Thresholds sit at the distinct score values
only, so tied items flip together; before integration the curve keeps, for
each distinct recall, the maximum precision attained there, which removes
sawtooth artifacts.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import encode_document, level_targets
from .errors import EmptyDataset, NoPositivesError
from .hierarchy import LabelHierarchy


@dataclass
class ScoredSet:
    """Pooled (score, truth) pairs with optional per-pair grouping tags."""

    scores: np.ndarray
    truths: np.ndarray
    levels: np.ndarray | None = None
    labels: list[str] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.truths = np.asarray(self.truths, dtype=np.float64).reshape(-1)
        if self.scores.shape != self.truths.shape:
            raise ValueError("scores and truths differ in length")
        if not np.isin(self.truths, (0.0, 1.0)).all():
            raise ValueError("truths must be 0 or 1")
        if self.levels is not None:
            self.levels = np.asarray(self.levels).reshape(-1)
            if self.levels.shape != self.scores.shape:
                raise ValueError("levels tag length mismatch")

    def __len__(self) -> int:
        return self.scores.shape[0]

    def restrict_level(self, level: int) -> "ScoredSet":
        if self.levels is None:
            raise ValueError("no level tags present")
        keep = self.levels == level
        return ScoredSet(scores=self.scores[keep], truths=self.truths[keep])


def pr_curve(points: ScoredSet) -> list[tuple[float, float]]:
    """Micro precision-recall points, one per distinct score threshold.

    Thresholds are swept from the highest score down (predict positive iff
    score >= threshold), which makes recall non-decreasing along the list.
    An anchor (0, precision of the highest threshold) is prepended.

    Raises NoPositivesError when no pair is positive.
    """
    n_pos = points.truths.sum()
    if n_pos == 0:
        raise NoPositivesError("no positive pairs; curve undefined")
    order = np.argsort(-points.scores, kind="stable")
    scores = points.scores[order]
    truths = points.truths[order]
    cum_tp = np.cumsum(truths)
    # Last index of each run of equal scores: all tied pairs flip together.
    last_of_run = np.nonzero(np.diff(scores, append=-np.inf))[0]
    out: list[tuple[float, float]] = []
    for i in last_of_run:
        tp = cum_tp[i]
        predicted = i + 1.0
        out.append((tp / n_pos, tp / predicted))
    return [(0.0, out[0][1])] + out


def au_prc(points) -> float:
    """Trapezoidal area after flattening to max precision per distinct recall."""
    best: dict[float, float] = {}
    for recall, precision in points:
        if recall not in best or precision > best[recall]:
            best[recall] = precision
    curve = sorted(best.items())
    area = 0.0
    for (r0, p0), (r1, p1) in zip(curve, curve[1:]):
        area += (r1 - r0) * (p0 + p1) / 2.0
    return area


def auprc_of(scores, truths) -> float:
    return au_prc(pr_curve(ScoredSet(scores=np.asarray(scores), truths=np.asarray(truths))))


def collect_scores(params, docs, hier: LabelHierarchy, alpha: float | None = None):
    """Run the model over ``docs`` and pool scores for all three flavors.

    Returns (blended, local, global) ScoredSets tagged with the level of each
    pair's label.
    """
    from .classifier import forward_document  # local import avoids a cycle

    if not docs:
        raise EmptyDataset("no documents to evaluate")
    level_of = np.concatenate([
        np.full(len(hier.labels_at_level(h)), h, dtype=np.int64)
        for h in range(1, hier.depth + 1)
    ])
    blended_rows, local_rows, global_rows, truth_rows = [], [], [], []
    tape = params.tape
    for doc in docs:
        ids, mask = encode_document(doc, params.vocab, params.config.max_len)
        with tape.no_grad():
            scores, _ = forward_document(ids, mask, params, alpha=alpha)
        blended_rows.append(scores.blended_values())
        local_rows.append(scores.local_values())
        global_rows.append(scores.global_values())
        truth_rows.append(np.concatenate(level_targets(doc, hier)))
    truths = np.concatenate(truth_rows)
    tags = np.tile(level_of, len(docs))
    return (
        ScoredSet(np.concatenate(blended_rows), truths, levels=tags),
        ScoredSet(np.concatenate(local_rows), truths, levels=tags),
        ScoredSet(np.concatenate(global_rows), truths, levels=tags),
    )


def evaluate(params, docs, hier: LabelHierarchy, alpha: float | None = None) -> dict:
    """Evaluation report: overall and per-level AU(PRC) for every score flavor.

    Levels with no positive pairs report None rather than zero.
    """
    blended, local, global_ = collect_scores(params, docs, hier, alpha=alpha)

    def safe_au(scored: ScoredSet):
        try:
            return au_prc(pr_curve(scored))
        except NoPositivesError:
            return None

    per_level = []
    for h in range(1, hier.depth + 1):
        per_level.append({
            "level": h,
            "blended": safe_au(blended.restrict_level(h)),
            "local": safe_au(local.restrict_level(h)),
            "global": safe_au(global_.restrict_level(h)),
        })
    overall = au_prc(pr_curve(blended))
    return {
        "overall": {
            "blended": overall,
            "local": safe_au(local),
            "global": safe_au(global_),
        },
        "per_level": per_level,
        "counts": {
            "documents": len(docs),
            "labels": hier.num_labels,
            "pairs": len(blended),
            "positives": int(blended.truths.sum()),
        },
    }
