"""Binary classification metrics and multi-run aggregation.

Undefined precision/recall (zero denominator) is reported as 0.0 together
with a flag naming the affected metric, so downstream aggregation never sees
NaN but the condition stays visible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import SealedLabels
from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ParameterError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_rows(self) -> list[list[int]]:
        """[[tn, fp], [fn, tp]]: rows = truth (neg, pos), cols = prediction."""
        return [[self.tn, self.fp], [self.fn, self.tp]]


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: ConfusionMatrix
    undefined: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": self.confusion.as_rows(),
            "n_test": self.confusion.n,
            "undefined": list(self.undefined),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both inputs are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate(predictions, truth, positive_class: int = 1) -> MetricsReport:
    pred = np.asarray(predictions).reshape(-1)
    true = np.asarray(truth).reshape(-1)
    if pred.shape != true.shape:
        raise ShapeError(
            f"evaluate: {pred.shape[0]} predictions vs {true.shape[0]} truths"
        )
    if pred.shape[0] == 0:
        raise ParameterError("evaluate: need at least one sample")
    p = pred == positive_class
    t = true == positive_class
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    tn = int(np.sum(~p & ~t))
    fn = int(np.sum(~p & t))
    cm = ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)

    undefined: list[str] = []
    accuracy = (tp + tn) / cm.n
    if tp + fp == 0:
        precision = 0.0
        undefined.append("precision")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        undefined.append("recall")
    else:
        recall = tp / (tp + fn)
    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        confusion=cm,
        undefined=tuple(undefined),
    )


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    std: float  # sample standard deviation (n-1)

    def render(self, decimals: int = 1, percent: bool = True) -> str:
        scale = 100.0 if percent else 1.0
        return f"{self.mean * scale:.{decimals}f} ± {self.std * scale:.{decimals}f}"


def aggregate(reports: list[MetricsReport]) -> dict[str, AggregateStat]:
    """Per-metric mean and sample standard deviation over runs."""
    if len(reports) < 2:
        raise ParameterError(f"aggregate needs >= 2 reports, got {len(reports)}")
    out: dict[str, AggregateStat] = {}
    for name in ("accuracy", "precision", "recall", "f1"):
        values = np.array([getattr(r, name) for r in reports])
        out[name] = AggregateStat(
            mean=float(values.mean()), std=float(values.std(ddof=1))
        )
    return out


def synthetic_label_quality(
    synthetic_labels: dict[str, int], sealed: SealedLabels
) -> MetricsReport:
    """Quality of synthetic labels against the sealed ground truth.

    This is the single sanctioned consumer of the sealed handle; the labels
    never leave this function.
    """
    truth = sealed.unseal_for_evaluation()
    missing = sorted(set(synthetic_labels) - set(truth))
    if missing:
        raise ParameterError(
            f"sealed truth is missing {len(missing)} synthetic ids, "
            f"first: {missing[:3]}"
        )
    ids = sorted(synthetic_labels)
    pred = [synthetic_labels[i] for i in ids]
    true = [truth[i] for i in ids]
    return evaluate(pred, true, positive_class=1)
