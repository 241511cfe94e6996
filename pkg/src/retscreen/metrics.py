"""Binary classification metrics, ROC curves, and AUC.

All quantities are evaluated in exact rational arithmetic (`fractions.Fraction`)
so that rounding to the reported integer percentages is reproducible and
denominator-zero cases are reported as undefined instead of silently becoming
0 or 1. Floats appear only at the serialization boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction


class EmptyMatrix(ValueError):
    """Confusion matrix with zero total."""


class DegenerateLabels(ValueError):
    """ROC input containing only one class."""


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with the referable class as positive."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def as_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def percent_half_up(value: Fraction) -> int:
    """Round a fraction to integer percent, ties away from zero upward."""
    return math.floor(value * 100 + Fraction(1, 2))


def _ratio(num: int, den: int) -> Fraction | None:
    return Fraction(num, den) if den else None


def _f1(precision: Fraction | None, recall: Fraction | None) -> Fraction | None:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


METRIC_NAMES = (
    "accuracy",
    "ppv",
    "npv",
    "sensitivity",
    "specificity",
    "f1_positive",
    "f1_negative",
    "f1_macro",
)


@dataclass(frozen=True)
class MetricsReport:
    """Derived metrics for one confusion matrix; None marks an undefined value.

    F1 is reported per class: `f1_positive` pairs PPV with sensitivity,
    `f1_negative` pairs NPV with specificity. There is deliberately no bare
    "f1" field; callers must name the class they mean.
    """

    cm: ConfusionMatrix
    accuracy: Fraction | None
    ppv: Fraction | None
    npv: Fraction | None
    sensitivity: Fraction | None
    specificity: Fraction | None
    f1_positive: Fraction | None
    f1_negative: Fraction | None
    f1_macro: Fraction | None

    def value(self, name: str) -> Fraction | None:
        if name not in METRIC_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def percent(self, name: str) -> int | None:
        v = self.value(name)
        return None if v is None else percent_half_up(v)

    def as_dict(self) -> dict:
        """JSON-ready form: raw numerator/denominator plus rounded percent."""
        out: dict = {"confusion": self.cm.as_dict(), "metrics": {}}
        for name in METRIC_NAMES:
            v = self.value(name)
            if v is None:
                out["metrics"][name] = None
            else:
                out["metrics"][name] = {
                    "numerator": v.numerator,
                    "denominator": v.denominator,
                    "value": float(v),
                    "percent": percent_half_up(v),
                }
        return out


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Evaluate accuracy, PPV, NPV, sensitivity, specificity and per-class F1."""
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no entries")
    accuracy = Fraction(cm.tp + cm.tn, cm.total)
    ppv = _ratio(cm.tp, cm.tp + cm.fp)
    npv = _ratio(cm.tn, cm.tn + cm.fn)
    sensitivity = _ratio(cm.tp, cm.tp + cm.fn)
    specificity = _ratio(cm.tn, cm.tn + cm.fp)
    f1_pos = _f1(ppv, sensitivity)
    f1_neg = _f1(npv, specificity)
    f1_macro = None if f1_pos is None or f1_neg is None else (f1_pos + f1_neg) / 2
    return MetricsReport(
        cm=cm,
        accuracy=accuracy,
        ppv=ppv,
        npv=npv,
        sensitivity=sensitivity,
        specificity=specificity,
        f1_positive=f1_pos,
        f1_negative=f1_neg,
        f1_macro=f1_macro,
    )


@dataclass(frozen=True)
class RocPoint:
    """One operating point: predict positive iff score >= threshold."""

    threshold: float
    fpr: Fraction
    tpr: Fraction


@dataclass(frozen=True)
class RocCurve:
    points: tuple[RocPoint, ...]
    auc: Fraction

    def rows(self) -> list[tuple[float, float, float]]:
        """(threshold, fpr, tpr) rows for CSV export."""
        return [(p.threshold, float(p.fpr), float(p.tpr)) for p in self.points]


def roc_curve(scores: list[float], truths: list[int]) -> RocCurve:
    """Build the ROC over all distinct score thresholds, descending.

    Ties share one threshold, which makes the trapezoidal area below equal
    to the pairwise-concordance probability with ties counted one half.
    """
    if len(scores) != len(truths):
        raise ValueError("scores and truths must have equal length")
    if not scores:
        raise ValueError("need at least one observation")
    n_pos = sum(1 for t in truths if t)
    n_neg = len(truths) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("ROC needs at least one positive and one negative")

    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    points = [RocPoint(threshold=math.inf, fpr=Fraction(0), tpr=Fraction(0))]
    tp = fp = 0
    i = 0
    while i < len(order):
        threshold = scores[order[i]]
        while i < len(order) and scores[order[i]] == threshold:
            if truths[order[i]]:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append(RocPoint(threshold=threshold, fpr=Fraction(fp, n_neg), tpr=Fraction(tp, n_pos)))
    curve_points = tuple(points)
    return RocCurve(points=curve_points, auc=auc(curve_points))


def auc(curve: RocCurve | tuple[RocPoint, ...]) -> Fraction:
    """Trapezoidal area under the ROC, over the FPR axis."""
    points = curve.points if isinstance(curve, RocCurve) else curve
    area = Fraction(0)
    for a, b in zip(points, points[1:]):
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2
    return area
