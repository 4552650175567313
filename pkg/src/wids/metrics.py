"""Multiclass evaluation: confusion tallies, macro metrics, OvR FPR and AUC."""

from __future__ import annotations

import json
import platform
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import MetricError
from .table import N_CLASSES, ClassLabel

REPORT_SCHEMA_VERSION = 1

#: Scalar metrics that fold aggregation averages.
SCALAR_METRICS = ("accuracy", "macro_precision", "macro_recall", "macro_f1", "macro_fpr")


def hardware_summary() -> str:
    return f"{platform.system()}-{platform.machine()} python{platform.python_version()} numpy{np.__version__}"


def confusion(labels, preds) -> np.ndarray:
    """3x3 count matrix, rows = true class, columns = predicted class."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if labels.shape != preds.shape:
        raise MetricError(f"length mismatch: {labels.shape} vs {preds.shape}")
    if labels.size == 0:
        raise MetricError("empty label vector")
    m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(m, (labels, preds), 1)
    return m


@dataclass
class EvalReport:
    """Evaluation results for one model on one dataset.

    FPR is one-vs-rest per class (FP / (FP + TN)), macro-averaged, matching
    the macro convention of the other metrics. Zero-denominator metrics are
    reported as 0 with the affected metric named in the per-class flags.
    """

    confusion: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_fpr: float
    per_class: list
    roc_auc_ovr: Optional[float] = None
    fold_mean: Optional[dict] = None
    fold_std: Optional[dict] = None
    hardware: str = field(default_factory=hardware_summary)

    def scalar(self, name: str) -> float:
        return float(getattr(self, name))

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "macro_fpr": self.macro_fpr,
            "per_class": self.per_class,
            "roc_auc_ovr": self.roc_auc_ovr,
            "fold_mean": self.fold_mean,
            "fold_std": self.fold_std,
            "hardware": self.hardware,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv_rows(self) -> list:
        """Flat rows: metric,class,value,fold_mean,fold_std."""
        rows = [["metric", "class", "value", "fold_mean", "fold_std"]]

        def fold(name):
            mean = (self.fold_mean or {}).get(name, "")
            std = (self.fold_std or {}).get(name, "")
            return [mean, std]

        for name in SCALAR_METRICS:
            rows.append([name, "", self.scalar(name)] + fold(name))
        if self.roc_auc_ovr is not None:
            rows.append(["roc_auc_ovr", "", self.roc_auc_ovr] + fold("roc_auc_ovr"))
        for entry in self.per_class:
            for metric in ("precision", "recall", "f1", "fpr"):
                rows.append([metric, entry["name"], entry[metric], "", ""])
        return rows


def macro_metrics(conf: np.ndarray) -> EvalReport:
    """Per-class and macro precision/recall/F1/FPR plus accuracy from counts."""
    conf = np.asarray(conf, dtype=np.int64)
    total = int(conf.sum())
    if total <= 0:
        raise MetricError("confusion matrix is empty")
    per_class = []
    precs, recs, f1s, fprs = [], [], [], []
    for c in range(N_CLASSES):
        tp = int(conf[c, c])
        fp = int(conf[:, c].sum() - tp)
        fn = int(conf[c, :].sum() - tp)
        tn = total - tp - fp - fn
        flags = []

        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision = 0.0
            flags.append("precision_zero_division")
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall = 0.0
            flags.append("recall_zero_division")
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
        if fp + tn > 0:
            fpr = fp / (fp + tn)
        else:
            fpr = 0.0
            flags.append("fpr_zero_division")

        per_class.append({
            "class": c,
            "name": ClassLabel(c).display_name,
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "fpr": fpr,
            "flags": flags,
        })
        precs.append(precision)
        recs.append(recall)
        f1s.append(f1)
        fprs.append(fpr)

    return EvalReport(
        confusion=conf,
        accuracy=float(np.trace(conf)) / total,
        macro_precision=float(np.mean(precs)),
        macro_recall=float(np.mean(recs)),
        macro_f1=float(np.mean(f1s)),
        macro_fpr=float(np.mean(fprs)),
        per_class=per_class,
    )


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group's average rank."""
    uniq, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    start = np.concatenate(([0], np.cumsum(counts)[:-1])) + 1
    return (start + (counts - 1) / 2.0)[inverse]


def _binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    ranks = _average_ranks(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_ovr(labels, probs) -> float:
    """One-vs-rest AUC per class, macro-averaged over non-degenerate classes.

    AUC is the rank probability that a random positive outscores a random
    negative, ties counting one half.
    """
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
        raise MetricError("probs must be one row of class scores per label")
    aucs = []
    for c in range(probs.shape[1]):
        positive = labels == c
        if positive.all() or not positive.any():
            continue
        aucs.append(_binary_auc(probs[:, c], positive))
    if not aucs:
        raise MetricError("every one-vs-rest problem is degenerate")
    return float(np.mean(aucs))


def roc_curve_points(labels, probs) -> list:
    """(class, threshold, tpr, fpr) rows over all distinct score thresholds."""
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    rows = []
    for c in range(probs.shape[1]):
        positive = labels == c
        n_pos, n_neg = int(positive.sum()), int((~positive).sum())
        if n_pos == 0 or n_neg == 0:
            continue
        scores = probs[:, c]
        for thr in sorted(set(scores.tolist()), reverse=True):
            hit = scores >= thr
            rows.append((
                ClassLabel(c).display_name,
                thr,
                float((hit & positive).sum() / n_pos),
                float((hit & ~positive).sum() / n_neg),
            ))
    return rows


def evaluate(labels, preds, probs=None) -> EvalReport:
    report = macro_metrics(confusion(labels, preds))
    if probs is not None:
        report.roc_auc_ovr = roc_auc_ovr(labels, probs)
    return report


def aggregate_folds(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean and sample std (n-1) of every scalar metric across fold reports."""
    if len(reports) < 2:
        raise MetricError("need at least 2 reports to aggregate")
    names = list(SCALAR_METRICS)
    if all(r.roc_auc_ovr is not None for r in reports):
        names.append("roc_auc_ovr")
    mean, std = {}, {}
    for name in names:
        vals = np.array([r.scalar(name) for r in reports])
        mean[name] = float(vals.mean())
        std[name] = float(vals.std(ddof=1))
    merged = macro_metrics(sum(r.confusion for r in reports))
    merged.fold_mean = mean
    merged.fold_std = std
    if "roc_auc_ovr" in names:
        merged.roc_auc_ovr = mean["roc_auc_ovr"]
    return merged
