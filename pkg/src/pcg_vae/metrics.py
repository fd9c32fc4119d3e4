"""ROC/AUC over anomaly scores and Pearson correlation of KL vs reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Label


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_curve(scores, positives) -> RocCurve:
    """ROC of ``scores`` with ``positives`` (bool mask) as the positive class.

    Thresholds sweep the distinct score values from high to low, so tied
    scores move the curve diagonally and the trapezoidal area equals the
    Mann-Whitney probability P(pos > neg) + 0.5 P(pos == neg).
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(p)[ends]
    fp = (ends + 1) - tp
    # exact integer counts keep the endpoints at exactly (0,0) and (1,1)
    tpr = np.r_[0, tp] / n_pos
    fpr = np.r_[0, fp] / n_neg
    twice_area = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])) + fp[0] * tp[0])
    full = 2 * n_pos * n_neg
    # 1 - a is exact for a in [0.5, 1], so derive the low half from the high
    # half; then auc(-s) == 1 - auc(s) holds bit for bit in both directions
    high = 1.0 - min(twice_area, full - twice_area) / full
    auc = high if 2 * twice_area >= full else 1.0 - high
    return RocCurve(fpr, tpr, auc)


def roc_auc(reports) -> RocCurve:
    """ROC over score reports; Abnormal is positive, higher score = more anomalous."""
    return roc_curve([r.score for r in reports], [r.label is Label.ABNORMAL for r in reports])


def trapezoid_area(fpr, tpr) -> float:
    fpr, tpr = np.asarray(fpr, dtype=np.float64), np.asarray(tpr, dtype=np.float64)
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("pearson needs two 1-D sequences of equal length")
    if x.size < 2:
        raise MetricError("pearson needs at least 2 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise MetricError("pearson is undefined for a zero-variance input")
    rho = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def kl_recon_correlation(reports) -> float:
    """Pearson correlation over every super-frame of every report, pooled."""
    recon = [f.recon_loss for r in reports for f in r.frame_scores]
    kl = [f.kl for r in reports for f in r.frame_scores]
    if len(recon) < 2:
        raise MetricError("need at least 2 frame scores")
    return pearson(kl, recon)
