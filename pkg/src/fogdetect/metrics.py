"""Threshold metrics, ROC/AUC, equal error rate and the Hanley-McNeil AUC test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .errors import ContractError, DomainError, UndefinedMetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ContractError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsBundle:
    sensitivity: float
    specificity: float
    accuracy: float
    precision: float
    f_score: float
    geometric_mean: float
    # names of ratios whose denominator was zero (reported as 0.0)
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "f_score": self.f_score,
            "geometric_mean": self.geometric_mean,
            "degenerate": list(self.degenerate),
        }


def _check_binary(labels, scores) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(labels).reshape(-1)
    s = np.asarray(scores, dtype=float).reshape(-1)
    if len(y) != len(s):
        raise ContractError(f"labels ({len(y)}) and scores ({len(s)}) differ in length")
    if len(y) == 0:
        raise ContractError("empty input")
    if y.dtype != bool and not np.isin(y, (0, 1)).all():
        raise ContractError("labels must be 0/1")
    if not np.isfinite(s).all():
        raise ContractError("scores must be finite")
    return y.astype(bool), s


def confusion(labels, scores, threshold: float) -> ConfusionCounts:
    """Counts with FOG predicted iff ``score >= threshold``."""
    y, s = _check_binary(labels, scores)
    if not 0.0 <= threshold <= 1.0:
        raise ContractError(f"threshold must lie in [0, 1], got {threshold}")
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    return ConfusionCounts(tp, len(y) - tp - fp - fn, fp, fn)


def confusion_from_binary(labels, predicted) -> ConfusionCounts:
    y = np.asarray(labels).astype(bool).reshape(-1)
    p = np.asarray(predicted).astype(bool).reshape(-1)
    if len(y) != len(p):
        raise ContractError("label and prediction vectors differ in length")
    return ConfusionCounts(int(np.sum(p & y)), int(np.sum(~p & ~y)),
                           int(np.sum(p & ~y)), int(np.sum(~p & y)))


def metrics_bundle(c: ConfusionCounts) -> MetricsBundle:
    degenerate = []

    def ratio(name, num, den):
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    sens = ratio("sensitivity", c.tp, c.tp + c.fn)
    spec = ratio("specificity", c.tn, c.tn + c.fp)
    acc = ratio("accuracy", c.tp + c.tn, c.total)
    prec = ratio("precision", c.tp, c.tp + c.fp)
    f = ratio("f_score", 2.0 * prec * sens, prec + sens)
    return MetricsBundle(sens, spec, acc, prec, f, math.sqrt(sens * spec), tuple(degenerate))


def f_score(precision: float, sensitivity: float) -> float:
    if precision + sensitivity == 0:
        return 0.0
    return 2.0 * precision * sensitivity / (precision + sensitivity)


@dataclass(frozen=True)
class RocCurve:
    """ROC vertices for a descending threshold sweep.

    ``thresholds[i]`` is the score at which vertex i is reached (``score >=
    threshold`` is positive). Vertex 0 is (0, 0) at a threshold just above the
    maximum score.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float
    n_pos: int
    n_neg: int


def roc_auc(labels, scores) -> RocCurve:
    y, s = _check_binary(labels, scores)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC/AUC undefined: only one class present")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # last index of every group of tied scores
    ends = np.r_[np.nonzero(np.diff(s_sorted))[0], len(s) - 1]
    tps = np.cumsum(y_sorted)[ends]
    fps = (ends + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    top = float(np.nextafter(s_sorted[0], np.inf))
    thresholds = np.r_[top, s_sorted[ends]]
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr, tpr, thresholds, auc, n_pos, n_neg)


def auc_pair_count(labels, scores) -> float:
    """Mann-Whitney pair statistic: P(score_pos > score_neg) + 0.5 P(tie)."""
    y, s = _check_binary(labels, scores)
    pos, neg = s[y], s[~y]
    if len(pos) == 0 or len(neg) == 0:
        raise UndefinedMetricError("AUC undefined: only one class present")
    allv = np.concatenate([pos, neg])
    ranks = rankdata(allv)
    u = ranks[:len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float


def eer(labels, scores) -> EerResult:
    """Equal error rate where FPR = FNR on the linearly interpolated ROC.

    The returned threshold is interpolated between the scores of the two
    bracketing vertices.
    """
    roc = roc_auc(labels, scores)
    # g = FPR - FNR = FPR + TPR - 1 rises from -1 at vertex 0 to +1 at the last one
    g = roc.fpr + roc.tpr - 1.0
    k = int(np.argmax(g >= 0.0))
    if g[k] == 0.0 or k == 0:
        return EerResult(float(roc.fpr[k]), float(roc.thresholds[k]))
    t = -g[k - 1] / (g[k] - g[k - 1])
    fpr = roc.fpr[k - 1] + t * (roc.fpr[k] - roc.fpr[k - 1])
    thr = roc.thresholds[k - 1] + t * (roc.thresholds[k] - roc.thresholds[k - 1])
    return EerResult(float(fpr), float(min(max(thr, 0.0), 1.0)))


@dataclass(frozen=True)
class HanleyResult:
    se_a: float
    se_b: float
    z: float
    p_value: float


def hanley_se(auc: float, n_pos: int, n_neg: int) -> float:
    if not 0.0 < auc < 1.0:
        raise DomainError(f"AUC must lie in (0, 1), got {auc}")
    if n_pos < 1 or n_neg < 1:
        raise DomainError("class counts must be at least 1")
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc * auc / (1.0 + auc)
    var = (auc * (1.0 - auc) + (n_pos - 1) * (q1 - auc * auc)
           + (n_neg - 1) * (q2 - auc * auc)) / (n_pos * n_neg)
    return math.sqrt(var)


def hanley_auc_test(auc_a: float, auc_b: float, n_pos: int, n_neg: int) -> HanleyResult:
    """Two-sided z-test for two independent AUCs measured on equal-sized samples."""
    se_a = hanley_se(auc_a, n_pos, n_neg)
    se_b = hanley_se(auc_b, n_pos, n_neg)
    z = (auc_a - auc_b) / math.sqrt(se_a ** 2 + se_b ** 2)
    p = float(2.0 * ndtr(-abs(z)))
    return HanleyResult(se_a, se_b, z, min(p, 1.0))
