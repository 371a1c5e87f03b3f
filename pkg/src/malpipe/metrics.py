"""Binary detection metrics. The positive class is malicious (label 1)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SingleClassError


def _as_binary(v, name):
    a = np.asarray(v)
    if a.ndim != 1:
        raise DataError(f"{name} must be 1-D")
    if a.size and not np.isin(a, (0, 1)).all():
        raise DataError(f"{name} must contain only 0 and 1")
    return a.astype(np.int64)


def confusion(labels, predicted) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn)."""
    y = _as_binary(labels, "labels")
    p = _as_binary(predicted, "predicted")
    if y.size != p.size:
        raise DataError(f"length mismatch: {y.size} labels vs {p.size} predictions")
    if y.size == 0:
        raise DataError("cannot score an empty prediction set")
    tp = int(np.count_nonzero((y == 1) & (p == 1)))
    fp = int(np.count_nonzero((y == 0) & (p == 1)))
    tn = int(np.count_nonzero((y == 0) & (p == 0)))
    fn = int(np.count_nonzero((y == 1) & (p == 0)))
    return tp, fp, tn, fn


def accuracy_score(labels, predicted) -> float:
    tp, fp, tn, fn = confusion(labels, predicted)
    return (tp + tn) / (tp + fp + tn + fn)


def classification_metrics(tp: int, fp: int, tn: int, fn: int, flags: list | None = None):
    """(accuracy, precision, recall, f1). Zero denominators give 0.0 and append to ``flags``."""
    n = tp + fp + tn + fn
    if min(tp, fp, tn, fn) < 0 or n < 1:
        raise DataError("confusion counts must be non-negative with a positive total")
    flags = flags if flags is not None else []
    accuracy = (tp + tn) / n
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        flags.append("precision_undefined")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        flags.append("recall_undefined")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append("f1_undefined")
    return accuracy, precision, recall, f1


def roc_curve(labels, scores) -> list[tuple[float, float]]:
    """ROC points from a threshold sweep; tied scores form a single step."""
    y = _as_binary(labels, "labels")
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tps = np.cumsum(y)[ends]
    fps = (ends + 1) - tps
    points = [(0.0, 0.0)]
    points += [(fp / n_neg, tp / n_pos) for tp, fp in zip(tps.tolist(), fps.tolist())]
    return points


def trapezoid_area(points) -> float:
    pts = np.asarray(points, dtype=np.float64)
    return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))


def roc_auc(labels, scores) -> tuple[float, list[tuple[float, float]]]:
    """Mann-Whitney AUC (ties credited 1/2) and the ROC points.

    AUC is computed from mid-ranks; the trapezoid under the returned points
    equals it up to rounding.
    """
    y = _as_binary(labels, "labels")
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != y.shape:
        raise DataError(f"length mismatch: {y.size} labels vs {s.size} scores")
    if not np.isfinite(s).all():
        raise DataError("scores must be finite")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC is undefined when only one class is present")
    points = roc_curve(y, s)
    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], sorted_s.size]
    # mid-rank (1-based) of every tie group
    mid = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(mid, ends - starts)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg)), points


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    roc_points: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self, include_roc: bool = True):
        d = {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "n": self.n,
            "flags": list(self.flags),
        }
        if include_roc:
            d["roc_points"] = [[fpr, tpr] for fpr, tpr in self.roc_points]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["accuracy"], d["precision"], d["recall"], d["f1"], d["auc"],
            d["tp"], d["fp"], d["tn"], d["fn"],
            [tuple(p) for p in d.get("roc_points", [])], list(d.get("flags", [])),
        )

    def summary_rows(self):
        """(name, value) pairs formatted as percentages with two decimals."""
        rows = []
        for name in ("accuracy", "precision", "recall", "f1", "auc"):
            v = getattr(self, name)
            rows.append((name, "n/a" if v is None else f"{100 * v:.2f}%"))
        return rows


def evaluate(labels, probabilities, threshold: float = 0.5) -> MetricsReport:
    """Full report from probabilities; AUC is None (flagged) if one class is absent."""
    probs = np.asarray(probabilities, dtype=np.float64)
    predicted = (probs >= threshold).astype(np.int64)
    tp, fp, tn, fn = confusion(labels, predicted)
    flags = []
    acc, prec, rec, f1 = classification_metrics(tp, fp, tn, fn, flags)
    if tp + fn == 0 or tn + fp == 0:
        auc, points = None, []
        flags.append("auc_undefined")
    else:
        auc, points = roc_auc(labels, probs)
    return MetricsReport(acc, prec, rec, f1, auc, tp, fp, tn, fn, points, flags)


def write_roc_csv(points, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fpr,tpr\n")
        for fpr, tpr in points:
            fh.write(f"{fpr!r},{tpr!r}\n")
