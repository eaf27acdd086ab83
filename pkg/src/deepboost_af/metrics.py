"""Confusion counts, the four binary detection metrics, and training-time reporting."""

from __future__ import annotations

import csv
import io
import time
from contextlib import contextmanager
from dataclasses import dataclass

from .errors import LengthMismatch, UndefinedMetric

REPORT_COLUMNS = ("model", "sensitivity", "accuracy", "precision", "f1", "ttt")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    def swapped(self):
        """The same counts seen with the other class taken as positive."""
        return ConfusionMatrix(self.tn, self.fn, self.tp, self.fp)


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    sensitivity: float
    precision: float
    f1: float
    total_training_time_s: float = 0.0


def accumulate(predictions, truths, positive=1) -> ConfusionMatrix:
    predictions, truths = list(predictions), list(truths)
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    tp = fp = tn = fn = 0
    for p, t in zip(predictions, truths):
        pp, tt = p == positive, t == positive
        if pp and tt:
            tp += 1
        elif pp:
            fp += 1
        elif tt:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def _ratio(num, den, name):
    if den == 0:
        raise UndefinedMetric(name)
    return num / den


def accuracy(cm):
    return _ratio(cm.tp + cm.tn, cm.fp + cm.fn + cm.tn + cm.tp, "accuracy")


def sensitivity(cm):
    return _ratio(cm.tp, cm.fn + cm.tp, "sensitivity")


def precision(cm):
    return _ratio(cm.tp, cm.fp + cm.tp, "precision")


def f1_score(prec: float, sens: float) -> float:
    return _ratio(2.0 * prec * sens, prec + sens, "f1")


def compute_metrics(cm: ConfusionMatrix, training_time_s: float = 0.0) -> MetricReport:
    p = precision(cm)
    s = sensitivity(cm)
    return MetricReport(accuracy(cm), s, p, f1_score(p, s), training_time_s)


def format_hms(seconds: float) -> str:
    """Whole seconds as ``H:MM:SS``."""
    total = int(seconds)
    h, rem = divmod(total, 3600)
    m, s = divmod(rem, 60)
    return f"{h}:{m:02d}:{s:02d}"


class Timer:
    def __init__(self, label=""):
        self.label = label
        self.elapsed = 0.0


@contextmanager
def time_block(label: str = ""):
    """Measure wall-clock time of the ``with`` body on the monotonic clock."""
    timer = Timer(label)
    start = time.perf_counter()
    try:
        yield timer
    finally:
        timer.elapsed = time.perf_counter() - start


def report_row(model: str, report: MetricReport) -> dict:
    return {
        "model": model,
        "sensitivity": f"{report.sensitivity:.4f}",
        "accuracy": f"{report.accuracy:.4f}",
        "precision": f"{report.precision:.4f}",
        "f1": f"{report.f1:.4f}",
        "ttt": format_hms(report.total_training_time_s),
    }


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def rows_to_text(rows) -> str:
    head = ("Model", "Sensitivity", "Accuracy", "Precision", "F1_score", "TTT")
    table = [head] + [tuple(r[c] for c in REPORT_COLUMNS) for r in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(head))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in table) + "\n"
