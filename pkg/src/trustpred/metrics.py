"""Evaluation of trustworthiness confidences against correctness labels.

All curve constructions sort by confidence (descending) and move tie groups
atomically, so results never depend on sort stability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import UndefinedMetricError


class ConfidenceRecord(NamedTuple):
    confidence: float
    o: int


@dataclass(frozen=True)
class ThresholdPolicy:
    positive_threshold: float = 0.5
    negative_threshold: float = 0.5

    def __post_init__(self):
        if not self.negative_threshold <= self.positive_threshold:
            raise ValueError("negative threshold must not exceed the positive threshold")

    @classmethod
    def tcp(cls, k: int) -> ThresholdPolicy:
        """Negative threshold 1/K, as used with the TCP confidence loss."""
        return cls(0.5, 1.0 / k)


def as_arrays(confidence, o=None) -> tuple[np.ndarray, np.ndarray]:
    """Validate inputs; accepts two arrays or a sequence of ConfidenceRecords."""
    if o is None:
        pairs = list(confidence)
        confidence = [r[0] for r in pairs]
        o = [r[1] for r in pairs]
    c = np.asarray(confidence, dtype=np.float64).reshape(-1)
    y = np.asarray(o).reshape(-1)
    if c.shape != y.shape:
        raise ValueError(f"{c.shape[0]} confidences for {y.shape[0]} labels")
    if not np.isfinite(c).all():
        raise ValueError("confidences must be finite")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return c, y.astype(np.int64)


def _require_both(y: np.ndarray, what: str) -> tuple[int, int]:
    n_pos = int(y.sum())
    n_neg = y.shape[0] - n_pos
    if n_pos == 0:
        raise UndefinedMetricError(f"{what} undefined: no o=1 (correct) records")
    if n_neg == 0:
        raise UndefinedMetricError(f"{what} undefined: no o=0 (incorrect) records")
    return n_pos, n_neg


def _tie_groups(score: np.ndarray, label: np.ndarray):
    """Cumulative (predicted-positive, true-positive) counts at each tie-group end,
    walking scores from highest to lowest."""
    order = np.argsort(-score, kind="stable")
    s = score[order]
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp = np.cumsum(label[order])[ends]
    pp = ends + 1
    return pp, tp, s[ends]


def tpr_tnr(confidence, o=None, policy: ThresholdPolicy = ThresholdPolicy()):
    """TPR, TNR and the confusion counts under a threshold policy.

    Trustworthy iff confidence > positive threshold; untrustworthy iff
    confidence <= negative threshold.  A correct record that is not flagged
    trustworthy counts as FN and an incorrect record not flagged untrustworthy
    counts as FP; ``abstain`` counts records strictly between the thresholds.
    """
    c, y = as_arrays(confidence, o)
    n_pos, n_neg = _require_both(y, "TPR/TNR")
    pos_pred = c > policy.positive_threshold
    neg_pred = c <= policy.negative_threshold
    tp = int(np.count_nonzero(pos_pred & (y == 1)))
    tn = int(np.count_nonzero(neg_pred & (y == 0)))
    counts = {
        "tp": tp,
        "fp": n_neg - tn,
        "tn": tn,
        "fn": n_pos - tp,
        "abstain": int(np.count_nonzero(~pos_pred & ~neg_pred)),
    }
    return tp / n_pos, tn / n_neg, counts


def roc_points(confidence, o=None) -> list[tuple[float, float]]:
    """(FPR, TPR) vertices from (0, 0) to (1, 1)."""
    c, y = as_arrays(confidence, o)
    n_pos, n_neg = _require_both(y, "ROC")
    pp, tp, _ = _tie_groups(c, y)
    fp = pp - tp
    return [(0.0, 0.0)] + [(f / n_neg, t / n_pos) for f, t in zip(fp.tolist(), tp.tolist())]


def auc(confidence, o=None) -> float:
    """Trapezoidal ROC area; ties count as half-concordant."""
    c, y = as_arrays(confidence, o)
    n_pos, n_neg = _require_both(y, "AUC")
    pp, tp, _ = _tie_groups(c, y)
    tp = np.concatenate(([0], tp)).astype(np.int64)
    fp = np.concatenate(([0], pp)).astype(np.int64) - tp
    # twice the area in integer units, then one division
    area2 = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return area2 / (2 * n_pos * n_neg)


def fpr_at_tpr(confidence, o=None, target_tpr: float = 0.95) -> float:
    """FPR at the given TPR, linearly interpolated between bracketing ROC vertices."""
    if not 0 < target_tpr <= 1:
        raise ValueError("target TPR must lie in (0, 1]")
    pts = roc_points(confidence, o)
    for (f0, t0), (f1, t1) in zip(pts, pts[1:]):
        if t1 >= target_tpr:
            if t1 == target_tpr:
                return f1
            return f0 + (target_tpr - t0) * (f1 - f0) / (t1 - t0)
    return pts[-1][0]


def _pr_parts(confidence, o, positive_is_error: bool):
    c, y = as_arrays(confidence, o)
    score, label = (-c, 1 - y) if positive_is_error else (c, y)
    n_positive = int(label.sum())
    if n_positive == 0:
        name = "error (o=0)" if positive_is_error else "success (o=1)"
        raise UndefinedMetricError(f"AUPR undefined: no {name} records")
    pp, tp, _ = _tie_groups(score, label)
    return pp, tp, n_positive


def aupr(confidence, o=None, positive_is_error: bool = False) -> float:
    """Average precision.

    With ``positive_is_error`` the incorrect predictions are the positive
    class and the ranking score is the negated confidence.
    """
    pp, tp, n_positive = _pr_parts(confidence, o, positive_is_error)
    gained = np.diff(np.concatenate(([0], tp)))
    return float(np.sum((tp / pp) * gained) / n_positive)


def pr_points(confidence, o=None, positive_is_error: bool = False) -> list[tuple[float, float]]:
    """(recall, precision) at each tie-group boundary."""
    pp, tp, n_positive = _pr_parts(confidence, o, positive_is_error)
    return [(t / n_positive, t / p) for t, p in zip(tp.tolist(), pp.tolist())]


@dataclass(frozen=True)
class RiskCoveragePoint:
    coverage: float
    selective_risk: float


def risk_coverage(confidence, o=None) -> list[RiskCoveragePoint]:
    """Selective risk of the most confident prefix, one point per tie group."""
    c, y = as_arrays(confidence, o)
    n = c.shape[0]
    if n == 0:
        raise ValueError("risk-coverage needs at least one record")
    kept, correct, _ = _tie_groups(c, y)
    return [RiskCoveragePoint(k / n, 1.0 - t / k) for k, t in zip(kept.tolist(), correct.tolist())]


def aurc(points: list[RiskCoveragePoint]) -> float:
    """Area under a risk-coverage curve (step-wise, each group weighted by its coverage)."""
    prev = 0.0
    area = 0.0
    for p in points:
        area += (p.coverage - prev) * p.selective_risk
        prev = p.coverage
    return area


METRIC_KEYS = ("fpr_at_95tpr", "aupr_error", "aupr_success", "auc", "tpr", "tnr")


@dataclass(frozen=True)
class MetricsReport:
    fpr_at_95tpr: float
    aupr_error: float
    aupr_success: float
    auc: float
    tpr: float
    tnr: float
    acc: float
    counts: dict

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in METRIC_KEYS}
        out["acc"] = self.acc
        out["counts"] = dict(self.counts)
        return out


def full_report(confidence, o=None, policy: ThresholdPolicy = ThresholdPolicy()) -> MetricsReport:
    c, y = as_arrays(confidence, o)
    n_pos, _ = _require_both(y, "metrics report")
    tpr, tnr, counts = tpr_tnr(c, y, policy)
    return MetricsReport(
        fpr_at_95tpr=fpr_at_tpr(c, y, 0.95),
        aupr_error=aupr(c, y, positive_is_error=True),
        aupr_success=aupr(c, y, positive_is_error=False),
        auc=auc(c, y),
        tpr=tpr,
        tnr=tnr,
        acc=n_pos / y.shape[0],
        counts=counts,
    )
