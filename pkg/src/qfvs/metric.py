"""Semantic summary evaluation.

Two shots are compared by the IOU of their concept tags. Two summaries are
aligned by a maximum-weight bipartite matching over those IOU weights, and the
matched pairs give precision, recall and F1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Summary, Video

MODES = ("count", "weight")


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    matched_pairs: tuple = ()
    matching_weight: float = 0.0
    mode: str = "count"

    def as_record(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "mode": self.mode}


def f1_score(precision, recall):
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def iou(a, b, dictionary_size=None) -> float:
    """Intersection-over-union of two concept sets; 0 when both are empty."""
    a, b = frozenset(a), frozenset(b)
    if dictionary_size is not None:
        for c in a | b:
            if not 0 <= c < dictionary_size:
                raise ValueError(f"concept index {c} outside dictionary of size {dictionary_size}")
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def _check_video(s: Summary, v: Video):
    if s.video_id != v.id:
        raise ValueError(f"summary belongs to video {s.video_id!r}, not {v.id!r}")
    s.check(v)


def similarity_matrix(sys: Summary, ref: Summary, v: Video) -> np.ndarray:
    _check_video(sys, v)
    _check_video(ref, v)
    a = v.tag_matrix[list(sys.shots)]
    b = v.tag_matrix[list(ref.shots)]
    inter = a @ b.T
    union = a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def max_weight_matching(w):
    """Exact maximum-weight bipartite matching of a non-negative weight matrix.

    Returns ``(pairs, total)`` where pairs are (row, col) with positive weight.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("weight matrix must be 2-D")
    if w.size == 0:
        return [], 0.0
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("matching weights must be finite and non-negative")
    rows, cols = linear_sum_assignment(w, maximize=True)
    keep = w[rows, cols] > 0
    rows, cols = rows[keep], cols[keep]
    pairs = list(zip(rows.tolist(), cols.tolist()))
    total = float(w[rows, cols].sum())
    return pairs, total


def evaluate(sys: Summary, ref: Summary, v: Video, mode: str = "count") -> EvalReport:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    w = similarity_matrix(sys, ref, v)
    if len(sys) == 0 or len(ref) == 0:
        return EvalReport(0.0, 0.0, 0.0, (), 0.0, mode)
    pairs, total = max_weight_matching(w)
    matched = float(len(pairs)) if mode == "count" else total
    precision = matched / len(sys)
    recall = matched / len(ref)
    named = tuple((sys.shots[r], ref.shots[c], float(w[r, c])) for r, c in pairs)
    return EvalReport(precision, recall, f1_score(precision, recall), named, total, mode)


def evaluate_multi(sys: Summary, refs, v: Video, mode: str = "count") -> EvalReport:
    """Mean precision, recall and F1 against several references.

    F1 is averaged directly rather than recomputed from the mean P and R.
    """
    refs = list(refs)
    if not refs:
        raise ValueError("evaluate_multi needs at least one reference summary")
    reports = [evaluate(sys, r, v, mode) for r in refs]
    n = len(reports)
    return EvalReport(
        sum(r.precision for r in reports) / n,
        sum(r.recall for r in reports) / n,
        sum(r.f1 for r in reports) / n,
        (),
        sum(r.matching_weight for r in reports) / n,
        mode,
    )
