"""Confusion matrix and per-class precision/recall/F1 reporting.

Metrics are computed in exact rational arithmetic (fractions.Fraction) and
converted to float at the end. That makes the algebraic identities hold
bitwise: weighted-average recall equals accuracy exactly, F1 is exactly the
harmonic mean of P and R, and supports sum to the dataset size. Cells whose
denominator is zero are reported as 0 and marked.

Class 0 is "Violence", class 1 is "Non-Violence"; argmax ties resolve to the
lowest class index (documented, reproducible).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import classify

CLASS_NAMES = ("Violence", "Non-Violence")


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    confusion: np.ndarray  # rows = true class, cols = predicted class
    per_class: list        # ClassMetrics per class index
    macro_avg: ClassMetrics
    weighted_avg: ClassMetrics
    accuracy: float
    zero_division_cells: list  # e.g. ["Non-Violence.precision"]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def _safe_div(num: int, den: int, marks: list, cell: str) -> Fraction:
    if den == 0:
        marks.append(cell)
        return Fraction(0)
    return Fraction(num, den)


def report_from_confusion(confusion) -> EvalReport:
    """Build the full report from a square confusion matrix of counts."""
    cm = np.asarray(confusion, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    if (cm < 0).any():
        raise ValueError("confusion matrix entries must be nonnegative")
    k = cm.shape[0]
    total = int(cm.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")

    marks: list[str] = []
    per_class = []
    precisions, recalls, f1s, supports = [], [], [], []
    for c in range(k):
        name = CLASS_NAMES[c] if c < len(CLASS_NAMES) else f"class-{c}"
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum() - tp)
        fn = int(cm[c, :].sum() - tp)
        support = tp + fn
        p = _safe_div(tp, tp + fp, marks, f"{name}.precision")
        r = _safe_div(tp, tp + fn, marks, f"{name}.recall")
        if p + r == 0:
            marks.append(f"{name}.f1")
            f1 = Fraction(0)
        else:
            f1 = 2 * p * r / (p + r)
        precisions.append(p)
        recalls.append(r)
        f1s.append(f1)
        supports.append(support)
        per_class.append(ClassMetrics(float(p), float(r), float(f1), support))

    def macro(values):
        return float(sum(values) / k)

    def weighted(values):
        return float(sum(v * s for v, s in zip(values, supports)) / total)

    macro_avg = ClassMetrics(macro(precisions), macro(recalls), macro(f1s), total)
    weighted_avg = ClassMetrics(weighted(precisions), weighted(recalls), weighted(f1s), total)
    accuracy = float(Fraction(int(np.trace(cm)), total))
    return EvalReport(
        confusion=cm,
        per_class=per_class,
        macro_avg=macro_avg,
        weighted_avg=weighted_avg,
        accuracy=accuracy,
        zero_division_cells=marks,
    )


def evaluate(params, dataset: list, config) -> EvalReport:
    """Classify every labeled clip (argmax, ties -> class 0) and report."""
    if not dataset:
        raise ValueError("cannot evaluate an empty dataset")
    k = config.classes
    cm = np.zeros((k, k), dtype=np.int64)
    for clip in dataset:
        probs = classify(clip, params, config)
        pred = int(np.argmax(probs))  # np.argmax returns the first (lowest) index on ties
        cm[clip.label.class_index, pred] += 1
    return report_from_confusion(cm)


# ---------------------------------------------------------------------------
# rendering and export
# ---------------------------------------------------------------------------

def render_report(report: EvalReport) -> str:
    """Human-readable table: rows Violence, Non-Violence, Macro Average,
    Weighted Average; columns Precision, Recall, F1 score, Video Support."""
    rows = []
    for c, m in enumerate(report.per_class):
        name = CLASS_NAMES[c] if c < len(CLASS_NAMES) else f"class-{c}"
        rows.append((name, m))
    rows.append(("Macro Average", report.macro_avg))
    rows.append(("Weighted Average", report.weighted_avg))

    marked = set(report.zero_division_cells)

    def cell(name, metric, value):
        text = f"{value:.4f}"
        return text + "*" if f"{name}.{metric}" in marked else text

    header = f"{'':<18}{'Precision':>11}{'Recall':>9}{'F1 score':>10}{'Video Support':>15}"
    lines = [header]
    for name, m in rows:
        lines.append(
            f"{name:<18}"
            f"{cell(name, 'precision', m.precision):>11}"
            f"{cell(name, 'recall', m.recall):>9}"
            f"{cell(name, 'f1', m.f1):>10}"
            f"{m.support:>15}"
        )
    lines.append(f"Accuracy: {report.accuracy:.4f}  (n = {report.total})")
    if marked:
        lines.append("* zero denominator; metric reported as 0 by convention")
    return "\n".join(lines) + "\n"


def report_to_json(report: EvalReport) -> str:
    payload = {
        "confusion": report.confusion.tolist(),
        "classes": [
            {
                "name": CLASS_NAMES[c] if c < len(CLASS_NAMES) else f"class-{c}",
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
            }
            for c, m in enumerate(report.per_class)
        ],
        "macro_avg": vars(report.macro_avg),
        "weighted_avg": vars(report.weighted_avg),
        "accuracy": report.accuracy,
        "zero_division_cells": report.zero_division_cells,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> EvalReport:
    payload = json.loads(text)

    def unpack(d):
        return ClassMetrics(d["precision"], d["recall"], d["f1"], d["support"])

    return EvalReport(
        confusion=np.asarray(payload["confusion"], dtype=np.int64),
        per_class=[unpack(d) for d in payload["classes"]],
        macro_avg=unpack(payload["macro_avg"]),
        weighted_avg=unpack(payload["weighted_avg"]),
        accuracy=payload["accuracy"],
        zero_division_cells=list(payload["zero_division_cells"]),
    )


def export_report(report: EvalReport, base_path) -> tuple:
    """Write `<base>.txt` (table) and `<base>.json` (machine-readable);
    returns both paths. The JSON round-trips through report_from_json."""
    from pathlib import Path

    base = Path(base_path)
    txt = base.with_suffix(".txt")
    js = base.with_suffix(".json")
    txt.write_text(render_report(report))
    js.write_text(report_to_json(report))
    return txt, js
