"""Classification metrics: confusion matrix, accuracy, macro precision/recall
and Cohen's kappa, with explicit flags for degenerate denominators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[t][p] = number of samples with true class t predicted as p."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision_macro: float
    recall_macro: float
    kappa: float
    precision_per_class: np.ndarray
    recall_per_class: np.ndarray
    confusion: ConfusionMatrix
    empty_precision_classes: list[int]  # classes never predicted (precision set to 0)
    empty_recall_classes: list[int]  # classes never observed (recall set to 0)
    kappa_degenerate: bool  # chance agreement was 1, denominator vanished


def confusion(true_labels, pred_labels, n_classes: int) -> ConfusionMatrix:
    true_labels = np.asarray(true_labels, dtype=np.int64)
    pred_labels = np.asarray(pred_labels, dtype=np.int64)
    if true_labels.shape != pred_labels.shape:
        raise ValueError("label vectors have different lengths")
    if true_labels.size == 0:
        raise ValueError("empty label vectors")
    if true_labels.min() < 0 or pred_labels.min() < 0:
        raise ValueError("labels must be non-negative")
    if true_labels.max() >= n_classes or pred_labels.max() >= n_classes:
        raise ValueError(f"label value exceeds class count {n_classes}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (true_labels, pred_labels), 1)
    return ConfusionMatrix(counts=counts)


def report(cm: ConfusionMatrix) -> MetricsReport:
    """Metrics from a confusion matrix.

    Per-class precision/recall with an empty column/row are set to 0 and
    flagged rather than NaN; macro values are unweighted class means. Kappa is
    (p_o - p_e)/(1 - p_e) with p_e from the row/column marginals; when p_e = 1
    the value is 1 for a perfect predictor, else 0, flagged either way.
    """
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    diag = np.diag(counts)
    row_sums = counts.sum(axis=1)
    col_sums = counts.sum(axis=0)
    empty_cols = [int(c) for c in np.flatnonzero(col_sums == 0)]
    empty_rows = [int(c) for c in np.flatnonzero(row_sums == 0)]
    precision = np.divide(diag, col_sums, out=np.zeros_like(diag), where=col_sums > 0)
    recall = np.divide(diag, row_sums, out=np.zeros_like(diag), where=row_sums > 0)
    accuracy = float(diag.sum() / total)
    p_e = float(np.sum(row_sums * col_sums) / (total * total))
    if 1.0 - p_e < 1e-15:
        kappa = 1.0 if accuracy >= 1.0 - 1e-15 else 0.0
        degenerate = True
    else:
        kappa = (accuracy - p_e) / (1.0 - p_e)
        degenerate = False
    return MetricsReport(
        accuracy=accuracy,
        precision_macro=float(precision.mean()),
        recall_macro=float(recall.mean()),
        kappa=float(kappa),
        precision_per_class=precision,
        recall_per_class=recall,
        confusion=cm,
        empty_precision_classes=empty_cols,
        empty_recall_classes=empty_rows,
        kappa_degenerate=degenerate,
    )


def evaluate(true_labels, pred_labels, n_classes: int) -> MetricsReport:
    return report(confusion(true_labels, pred_labels, n_classes))


def report_to_dict(rep: MetricsReport) -> dict:
    return {
        "accuracy": rep.accuracy,
        "precision_macro": rep.precision_macro,
        "recall_macro": rep.recall_macro,
        "kappa": rep.kappa,
        "precision_per_class": [float(v) for v in rep.precision_per_class],
        "recall_per_class": [float(v) for v in rep.recall_per_class],
        "confusion": [[int(v) for v in row] for row in rep.confusion.counts],
        "empty_precision_classes": rep.empty_precision_classes,
        "empty_recall_classes": rep.empty_recall_classes,
        "kappa_degenerate": rep.kappa_degenerate,
    }


def report_from_dict(doc: dict) -> MetricsReport:
    return MetricsReport(
        accuracy=doc["accuracy"],
        precision_macro=doc["precision_macro"],
        recall_macro=doc["recall_macro"],
        kappa=doc["kappa"],
        precision_per_class=np.asarray(doc["precision_per_class"], dtype=np.float64),
        recall_per_class=np.asarray(doc["recall_per_class"], dtype=np.float64),
        confusion=ConfusionMatrix(counts=np.asarray(doc["confusion"], dtype=np.int64)),
        empty_precision_classes=list(doc["empty_precision_classes"]),
        empty_recall_classes=list(doc["empty_recall_classes"]),
        kappa_degenerate=doc["kappa_degenerate"],
    )


def report_to_csv(rep: MetricsReport, path: str) -> None:
    """Bar-chart data: metric,value rows for the four summary metrics."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("metric,value\n")
        fh.write(f"accuracy,{repr(rep.accuracy)}\n")
        fh.write(f"precision_macro,{repr(rep.precision_macro)}\n")
        fh.write(f"recall_macro,{repr(rep.recall_macro)}\n")
        fh.write(f"kappa,{repr(rep.kappa)}\n")
