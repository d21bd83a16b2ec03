"""Confusion-matrix metrics and one-vs-rest ranking metrics.

Averaging conventions:

* micro — counts pooled over classes. For single-label multi-class data,
  micro precision = micro recall = micro F1 = accuracy, and the FN and FP
  totals coincide (each error is one FN for the true class and one FP for
  the predicted class); both identities are exact here because the pooled
  formulas reduce to the same division.
* macro — unweighted mean over classes, skipping classes whose value is
  undefined (zero support for recall/F1/AUROC/AUPRC, zero predicted for
  precision); undefined per-class values are reported as None, never 0 or 1.

AUROC uses the pairwise convention (concordant + 0.5*ties) / (P*N),
computed via average ranks — exactly equal to O(B^2) pairwise counting.
AUPRC is average precision with descending-score tie groups scored as
blocks (no trapezoidal interpolation).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LabelError


def confusion(y_true, y_pred, n_classes):
    """C x C counts; entry (i, j) = samples of true class i predicted as j."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise LabelError("y_true and y_pred must be 1-D and the same length")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise LabelError(f"{name} labels outside [0, {n_classes})")
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(mat, (y_true, y_pred), 1)
    return mat


@dataclass
class PerClass:
    support: int
    tp: int
    fp: int
    fn: int
    precision: float = None
    recall: float = None
    f1: float = None
    auroc: float = None
    auprc: float = None


@dataclass
class MetricsReport:
    n_samples: int
    acc: float = None
    precision_micro: float = None
    recall_micro: float = None
    f1_micro: float = None
    precision_macro: float = None
    recall_macro: float = None
    f1_macro: float = None
    auroc_micro: float = None
    auroc_macro: float = None
    auprc_micro: float = None
    auprc_macro: float = None
    fn_total: int = 0
    fp_total: int = 0
    per_class: list = field(default_factory=list)

    @property
    def undefined(self):
        return self.n_samples == 0

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "n_samples", "acc",
            "precision_micro", "recall_micro", "f1_micro",
            "precision_macro", "recall_macro", "f1_macro",
            "auroc_micro", "auroc_macro", "auprc_micro", "auprc_macro",
            "fn_total", "fp_total",
        )}
        d["per_class"] = [vars(pc).copy() for pc in self.per_class]
        return d

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["per_class"] = [PerClass(**pc) for pc in d.get("per_class", [])]
        return cls(**d)


def _macro(values):
    defined = [v for v in values if v is not None]
    return (sum(defined) / len(defined)) if defined else None


def classification_metrics(conf):
    """Scalar metrics from a confusion matrix; empty input yields an
    all-undefined report rather than an error."""
    conf = np.asarray(conf, dtype=np.int64)
    n_classes = conf.shape[0]
    total = int(conf.sum())
    report = MetricsReport(n_samples=total)
    tp = np.diag(conf)
    fn = conf.sum(axis=1) - tp
    fp = conf.sum(axis=0) - tp
    for c in range(n_classes):
        pc = PerClass(support=int(tp[c] + fn[c]), tp=int(tp[c]), fp=int(fp[c]), fn=int(fn[c]))
        if tp[c] + fp[c] > 0:
            pc.precision = tp[c] / (tp[c] + fp[c])
        if pc.support > 0:
            pc.recall = tp[c] / pc.support
            denom = 2 * tp[c] + fp[c] + fn[c]
            pc.f1 = 2 * tp[c] / denom if denom > 0 else 0.0
        report.per_class.append(pc)
    if total == 0:
        return report
    pooled_tp = int(tp.sum())
    report.acc = pooled_tp / total
    # pooled counts: TP+FP = TP+FN = total, so one division serves all four
    report.precision_micro = pooled_tp / total
    report.recall_micro = pooled_tp / total
    report.f1_micro = (2 * pooled_tp) / (2 * total)
    report.fn_total = int(fn.sum())
    report.fp_total = int(fp.sum())
    report.precision_macro = _macro([pc.precision for pc in report.per_class])
    report.recall_macro = _macro([pc.recall for pc in report.per_class])
    report.f1_macro = _macro([pc.f1 for pc in report.per_class])
    return report


def _binary_auroc(scores, positive):
    """(concordant + 0.5*ties) / (P*N) via average ranks; exact."""
    p = int(positive.sum())
    n = positive.size - p
    if p == 0 or n == 0:
        return None
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(positive.size)
    start = 0
    for end in range(1, positive.size + 1):
        if end == positive.size or sorted_scores[end] != sorted_scores[start]:
            ranks[order[start:end]] = 0.5 * (start + 1 + end)  # average 1-based rank
            start = end
    u = float(ranks[positive].sum()) - p * (p + 1) / 2.0
    return u / (p * n)


def _binary_average_precision(scores, positive):
    """Average precision with descending-score ties handled as one block."""
    p = int(positive.sum())
    if p == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positive[order]
    ap = 0.0
    cum_tp = 0
    start = 0
    n = scores.size
    for end in range(1, n + 1):
        if end == n or sorted_scores[end] != sorted_scores[start]:
            block_tp = int(sorted_pos[start:end].sum())
            cum_tp += block_tp
            if block_tp:
                ap += (block_tp / p) * (cum_tp / end)
            start = end
    return ap


def _one_vs_rest(scores, y_true, n_classes, binary_fn):
    scores = np.asarray(scores, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64)
    if scores.ndim != 2 or scores.shape != (y_true.size, n_classes):
        raise LabelError(f"scores must be (B, {n_classes}), got {scores.shape}")
    if y_true.size and (y_true.min() < 0 or y_true.max() >= n_classes):
        raise LabelError(f"labels outside [0, {n_classes})")
    per_class = [binary_fn(scores[:, c], y_true == c) for c in range(n_classes)]
    onehot = np.zeros_like(scores, dtype=bool)
    onehot[np.arange(y_true.size), y_true] = True
    micro = binary_fn(scores.ravel(), onehot.ravel())
    return micro, _macro(per_class), per_class


def auroc(scores, y_true, n_classes):
    """One-vs-rest AUROC; returns (micro, macro, per_class)."""
    return _one_vs_rest(scores, y_true, n_classes, _binary_auroc)


def auprc(scores, y_true, n_classes):
    """One-vs-rest average precision; returns (micro, macro, per_class)."""
    return _one_vs_rest(scores, y_true, n_classes, _binary_average_precision)


def evaluate_predictions(y_true, probs, n_classes):
    """Full report from class-probability rows (argmax prediction,
    lowest index winning ties)."""
    probs = np.asarray(probs, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = probs.argmax(axis=1)
    report = classification_metrics(confusion(y_true, y_pred, n_classes))
    if report.n_samples == 0:
        return report
    roc_micro, roc_macro, roc_pc = auroc(probs, y_true, n_classes)
    pr_micro, pr_macro, pr_pc = auprc(probs, y_true, n_classes)
    report.auroc_micro, report.auroc_macro = roc_micro, roc_macro
    report.auprc_micro, report.auprc_macro = pr_micro, pr_macro
    for pc, r, p in zip(report.per_class, roc_pc, pr_pc):
        pc.auroc, pc.auprc = r, p
    return report


def aggregate_reports(reports):
    """Unweighted mean of fold metrics (None-skipping) plus summed FN/FP."""
    scalar_fields = [
        "acc", "precision_micro", "recall_micro", "f1_micro",
        "precision_macro", "recall_macro", "f1_macro",
        "auroc_micro", "auroc_macro", "auprc_micro", "auprc_macro",
    ]
    out = {"n_folds": len(reports), "n_samples": sum(r.n_samples for r in reports)}
    for name in scalar_fields:
        out[name] = _macro([getattr(r, name) for r in reports])
    out["fn_total"] = sum(r.fn_total for r in reports)
    out["fp_total"] = sum(r.fp_total for r in reports)
    return out


def _fmt_pct(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "--"
    return f"{100.0 * value:.2f}"


TABLE_COLUMNS = ("ACC", "AUROC", "AUPRC", "F_score", "Recall", "Precision", "FN", "FP")


def table_fields(report, averaging="default"):
    """Column values for one table row.

    averaging "default" prints micro P/R/F and macro AUROC/AUPRC (the
    package's reporting convention); "micro"/"macro" print one family
    throughout. Values are percentages with two decimals; FN/FP are counts.
    """
    if isinstance(report, MetricsReport):
        report = report.to_dict()
    pick = {
        "default": ("auroc_macro", "auprc_macro", "f1_micro", "recall_micro", "precision_micro"),
        "micro": ("auroc_micro", "auprc_micro", "f1_micro", "recall_micro", "precision_micro"),
        "macro": ("auroc_macro", "auprc_macro", "f1_macro", "recall_macro", "precision_macro"),
    }
    if averaging not in pick:
        raise LabelError(f"averaging must be one of {sorted(pick)}, got {averaging!r}")
    roc, pr, f1, rec, prec = pick[averaging]
    return [
        _fmt_pct(report.get("acc")),
        _fmt_pct(report.get(roc)),
        _fmt_pct(report.get(pr)),
        _fmt_pct(report.get(f1)),
        _fmt_pct(report.get(rec)),
        _fmt_pct(report.get(prec)),
        str(report.get("fn_total", 0)),
        str(report.get("fp_total", 0)),
    ]


def render_metrics_table(rows, averaging="default"):
    """TSV table: one (name, report) row per model."""
    lines = ["Model\t" + "\t".join(TABLE_COLUMNS)]
    for name, report in rows:
        lines.append(name + "\t" + "\t".join(table_fields(report, averaging)))
    return "\n".join(lines) + "\n"
