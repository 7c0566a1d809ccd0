"""Confusion counts, accuracy and one-vs-rest precision/recall/F1."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass
class ConfusionMatrix:
    """``counts[t, p]`` = number of examples of true class t predicted as p."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion counts must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("confusion counts must be non-negative")

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(pairs: Iterable[tuple[int, int]], n_classes: int) -> ConfusionMatrix:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in pairs:
        if not (0 <= t < n_classes and 0 <= p < n_classes):
            raise ValueError(f"label pair ({t}, {p}) outside 0..{n_classes - 1}")
        counts[t, p] += 1
    return ConfusionMatrix(counts)


@dataclass
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int
    # names of the metrics whose denominator was zero (reported as 0)
    undefined: tuple[str, ...] = ()


@dataclass
class Metrics:
    accuracy: float
    per_class: list[ClassScore]


def prf(tp: float, fp: float, fn: float) -> tuple[float, float, float, tuple[str, ...]]:
    """Precision, recall and F1 from one-vs-rest counts; 0 where undefined."""
    undefined = []
    if tp + fp > 0:
        pr = tp / (tp + fp)
    else:
        pr = 0.0
        undefined.append("precision")
    if tp + fn > 0:
        re = tp / (tp + fn)
    else:
        re = 0.0
        undefined.append("recall")
    if pr + re > 0:
        f1 = f1_score(pr, re)
    else:
        f1 = 0.0
        undefined.append("f1")
    return pr, re, f1, tuple(undefined)


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall."""
    return 2.0 * precision * recall / (precision + recall)


def metrics(cm: ConfusionMatrix) -> Metrics:
    if cm.total == 0:
        raise ValueError("cannot score an empty confusion matrix")
    C = cm.counts
    tp = np.diag(C)
    fp = C.sum(axis=0) - tp
    fn = C.sum(axis=1) - tp
    scores = []
    for c in range(cm.n_classes):
        pr, re, f1, undefined = prf(int(tp[c]), int(fp[c]), int(fn[c]))
        scores.append(ClassScore(pr, re, f1, int(C[c].sum()), undefined))
    return Metrics(float(tp.sum()) / cm.total, scores)


def report_text(m: Metrics, class_names: Sequence[str] | None = None) -> str:
    """Aligned table with 4-decimal values; undefined entries are flagged with ``*``."""
    names = list(class_names) if class_names is not None else [str(i) for i in range(len(m.per_class))]
    width = max(len("class"), *(len(n) for n in names))
    lines = [f"{'class':<{width}}  precision     recall         f1  support"]
    any_undefined = False
    for name, s in zip(names, m.per_class):
        cells = []
        for key in ("precision", "recall", "f1"):
            flag = "*" if key in s.undefined else " "
            any_undefined |= key in s.undefined
            cells.append(f"{getattr(s, key):>10.4f}{flag}")
        lines.append(f"{name:<{width}} {''.join(cells)} {s.support:>8d}")
    lines.append(f"accuracy {m.accuracy:.4f}")
    if any_undefined:
        lines.append("* zero denominator; reported as 0")
    return "\n".join(lines) + "\n"


def report_csv(m: Metrics, class_names: Sequence[str] | None = None) -> str:
    names = list(class_names) if class_names is not None else [str(i) for i in range(len(m.per_class))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "precision", "recall", "f1"])
    for name, s in zip(names, m.per_class):
        w.writerow([name, f"{s.precision:.4f}", f"{s.recall:.4f}", f"{s.f1:.4f}"])
    return buf.getvalue()
