"""Assemble and render evaluation reports.

One entry point (`evaluate_scenario`) runs aggregation, metrics, fairness
and ROC for a scenario; the writers emit the machine contract (JSON plus
delimited CSVs) and matplotlib figures next to it. The JSON document is
the authoritative output; text and figures are views of it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .aggregate import (
    DEFAULT_AGE_BOUNDARY,
    IMAGE_UNIT,
    PATIENT_UNIT,
    EvalPair,
    ScenarioSpec,
    age_label,
    filter_records,
    group_by_patient,
    outcome_records,
    pairs_confusion,
    parse_age_boundary,
    scenario_pairs,
    write_pairs,
)
from .backends import ModelId
from .cohort import ImageRecord, PredictionRow
from .domain import ReferralCategory, Sex
from .fairness import DEFAULT_DI_BOUNDS, FairnessReport, GroupSpec, fairness_report
from .fixtures import REPORTED_METRICS, CellCheck
from .metrics import (
    DegenerateLabels,
    MetricsReport,
    RocCurve,
    compute_metrics,
    roc_curve,
)

FAIRNESS_HEADER = ("Feature", "Type", "unprivileged", "privileged", "DI", "EOD_0", "EOD_1")
ROC_HEADER = ("threshold", "fpr", "tpr")


class EmptyInput(ValueError):
    """A scenario's filters left nothing to evaluate."""


def unit_type_label(unit: str) -> str:
    return "Per Patient" if unit == PATIENT_UNIT else "Per Image"


def _pair_value(pair: EvalPair, attribute: str, boundary: float) -> str | None:
    if attribute == "sex":
        return None if pair.sex is Sex.UNKNOWN else pair.sex.value
    if attribute == "age":
        return age_label(pair.age, boundary)
    if attribute == "projection":
        return None if pair.projection is None else pair.projection.value
    return None if pair.laterality is None else pair.laterality.value


@dataclass(frozen=True)
class EvaluationReport:
    """Everything one scenario run produced."""

    scenario: ScenarioSpec
    pairs: tuple[EvalPair, ...]
    metrics: MetricsReport
    roc: RocCurve | None = None
    fairness: FairnessReport | None = None
    group_metrics: dict[str, MetricsReport] | None = None

    def as_dict(self) -> dict:
        doc: dict = {
            "scenario": {
                "name": self.scenario.name,
                "unit": self.scenario.unit,
                "scheme": self.scenario.scheme.value,
            },
            "n_pairs": len(self.pairs),
            "notes": {"headline_f1": "f1_negative"},
        }
        doc.update(self.metrics.as_dict())
        if self.roc is not None:
            doc["roc"] = {
                "auc": {
                    "numerator": self.roc.auc.numerator,
                    "denominator": self.roc.auc.denominator,
                    "value": float(self.roc.auc),
                },
                "points": self.roc.rows(),
            }
        if self.fairness is not None:
            doc["fairness"] = self.fairness.as_dict()
        if self.group_metrics:
            doc["groups"] = {
                label: report.as_dict() for label, report in self.group_metrics.items()
            }
        return doc


def _scores_by_unit(
    pairs: Sequence[EvalPair],
    predictions: Iterable[PredictionRow],
    records: Sequence[ImageRecord],
    unit: str,
) -> dict[str, float]:
    """Continuous referral score per evaluated unit, where one exists.

    The referral model's score is the unit score; a patient takes the
    maximum over its images, mirroring the any-referable decision rule.
    Units whose images carry no referral score are simply absent.
    """
    m1: dict[str, float] = {
        row.image_id: row.score for row in predictions if row.model is ModelId.M1
    }
    if unit == IMAGE_UNIT:
        return {p.unit_id: m1[p.unit_id] for p in pairs if p.unit_id in m1}
    grouped = group_by_patient(records)
    out: dict[str, float] = {}
    for p in pairs:
        scores = [m1[r.image_id] for r in grouped.get(p.unit_id, []) if r.image_id in m1]
        if scores:
            out[p.unit_id] = max(scores)
    return out


def evaluate_scenario(
    records: Sequence[ImageRecord],
    predictions: Sequence[PredictionRow],
    spec: ScenarioSpec,
    di_bounds: tuple[Fraction, Fraction] = DEFAULT_DI_BOUNDS,
) -> EvaluationReport:
    """Run one scenario end to end over a cohort and its predictions."""
    kept = filter_records(records, spec)
    pairs = scenario_pairs(kept, predictions, spec)
    if not pairs:
        raise EmptyInput(f"scenario {spec.name!r} selected no evaluable units")
    metrics = compute_metrics(pairs_confusion(pairs))

    roc = None
    scored = _scores_by_unit(pairs, predictions, kept, spec.unit)
    if scored:
        scored_pairs = [p for p in pairs if p.unit_id in scored]
        try:
            roc = roc_curve(
                [scored[p.unit_id] for p in scored_pairs],
                [p.truth.code for p in scored_pairs],
            )
        except DegenerateLabels:
            roc = None

    fairness = None
    group_metrics: dict[str, MetricsReport] | None = None
    if spec.fairness is not None:
        group = spec.fairness
        boundary = DEFAULT_AGE_BOUNDARY
        if group.attribute == "age":
            boundary = parse_age_boundary(
                GroupSpec.label(group.unprivileged), GroupSpec.label(group.privileged)
            )
        outcomes = outcome_records(pairs, group.attribute, boundary)
        fairness = fairness_report(outcomes, group, di_bounds)
        group_metrics = {}
        for label, values in (
            (GroupSpec.label(group.unprivileged), group.unprivileged_values),
            (GroupSpec.label(group.privileged), group.privileged_values),
        ):
            subset = [
                p for p in pairs if _pair_value(p, group.attribute, boundary) in values
            ]
            if subset:
                group_metrics[label] = compute_metrics(pairs_confusion(subset))
    return EvaluationReport(
        scenario=spec,
        pairs=pairs,
        metrics=metrics,
        roc=roc,
        fairness=fairness,
        group_metrics=group_metrics,
    )


def fairness_csv_row(report: FairnessReport, unit: str) -> list[str]:
    def cell(v: Fraction | None) -> str:
        return "" if v is None else f"{float(v):.6g}"

    return [
        report.group.attribute,
        unit_type_label(unit),
        GroupSpec.label(report.group.unprivileged),
        GroupSpec.label(report.group.privileged),
        cell(report.di),
        cell(report.eod_0),
        cell(report.eod_1),
    ]


def write_fairness_csv(rows: Iterable[tuple[FairnessReport, str]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FAIRNESS_HEADER)
        for report, unit in rows:
            writer.writerow(fairness_csv_row(report, unit))


def write_roc_csv(curve: RocCurve, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROC_HEADER)
        for threshold, fpr, tpr in curve.rows():
            writer.writerow([f"{threshold:g}", repr(fpr), repr(tpr)])


# ---------------------------------------------------------------- figures


def render_confusion_figure(report: MetricsReport, path: str | Path, title: str) -> None:
    cm = report.cm
    grid = [[cm.tn, cm.fp], [cm.fn, cm.tp]]
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    ax.imshow(grid, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(grid[i][j]), ha="center", va="center", fontsize=14)
    ax.set_xticks([0, 1], ["non-referable", "referable"])
    ax.set_yticks([0, 1], ["non-referable", "referable"])
    ax.set_xlabel("predicted")
    ax.set_ylabel("truth")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_metrics_figure(report: MetricsReport, path: str | Path, title: str) -> None:
    names = [n for n in REPORTED_METRICS if report.value(n) is not None]
    values = [float(report.value(n)) * 100 for n in names]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    bars = ax.bar(names, values, color="#4878a8")
    for bar, v in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, v + 1, f"{v:.1f}", ha="center", fontsize=9)
    ax.set_ylim(0, 110)
    ax.set_ylabel("percent")
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_roc_figure(curve: RocCurve, path: str | Path, title: str) -> None:
    xs = [float(p.fpr) for p in curve.points]
    ys = [float(p.tpr) for p in curve.points]
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    ax.plot(xs, ys, marker="o", markersize=3, color="#4878a8")
    ax.plot([0, 1], [0, 1], linestyle="--", color="#999999", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"{title} (AUC {float(curve.auc):.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_reproduction_figure(checks: Sequence[CellCheck], path: str | Path) -> None:
    """All reference rows as one annotated grid of recomputed percents."""
    fixtures = list(dict.fromkeys(c.fixture for c in checks))
    metrics = list(dict.fromkeys(c.metric for c in checks))
    by_key = {(c.fixture, c.metric): c for c in checks}
    grid = [[by_key[(f, m)].actual for m in metrics] for f in fixtures]
    fig, ax = plt.subplots(figsize=(7.5, 0.55 * len(fixtures) + 1.6))
    ax.imshow(grid, cmap="Blues", vmin=0, vmax=130)
    for i, f in enumerate(fixtures):
        for j, m in enumerate(metrics):
            c = by_key[(f, m)]
            mark = "" if c.ok else f" != {c.expected}"
            ax.text(j, i, f"{c.actual}{mark}", ha="center", va="center", fontsize=8)
    ax.set_xticks(range(len(metrics)), metrics, rotation=20, fontsize=8)
    ax.set_yticks(range(len(fixtures)), fixtures, fontsize=8)
    ax.set_title("recomputed integer percents vs published")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ------------------------------------------------------------ text views


def format_quoted_line(report: MetricsReport) -> str:
    """The compact quoted layout: F1neg; (sens, spec, ppv, npv, acc)."""
    def pct(name: str) -> str:
        v = report.percent(name)
        return "NA" if v is None else str(v)

    head = pct("f1_negative")
    rest = ", ".join(pct(n) for n in ("sensitivity", "specificity", "ppv", "npv", "accuracy"))
    return f"{head}; ({rest})"


def format_checks(checks: Sequence[CellCheck]) -> str:
    fixtures = list(dict.fromkeys(c.fixture for c in checks))
    metrics = list(dict.fromkeys(c.metric for c in checks))
    name_w = max(len(f) for f in fixtures)
    col_w = max(max(len(m) for m in metrics), 9)
    lines = [" " * name_w + "  " + "  ".join(m.rjust(col_w) for m in metrics)]
    for f in fixtures:
        cells = []
        for m in metrics:
            c = next(x for x in checks if x.fixture == f and x.metric == m)
            cells.append((f"{c.actual}" if c.ok else f"{c.actual}!={c.expected}").rjust(col_w))
        lines.append(f.ljust(name_w) + "  " + "  ".join(cells))
    return "\n".join(lines)


def format_evaluation(report: EvaluationReport) -> str:
    cm = report.metrics.cm
    lines = [
        f"scenario {report.scenario.name}: unit={report.scenario.unit} "
        f"scheme={report.scenario.scheme.value} pairs={len(report.pairs)}",
        f"confusion TN={cm.tn} FP={cm.fp} FN={cm.fn} TP={cm.tp}",
        f"metrics {format_quoted_line(report.metrics)}",
    ]
    if report.roc is not None:
        lines.append(f"auc {float(report.roc.auc):.4f}")
    if report.fairness is not None:
        f = report.fairness
        def fmt(v):
            return "NA" if v is None else f"{float(v):.4f}"
        lines.append(
            f"fairness {f.group.attribute} "
            f"{GroupSpec.label(f.group.unprivileged)} vs {GroupSpec.label(f.group.privileged)}: "
            f"DI={fmt(f.di)} EOD_0={fmt(f.eod_0)} EOD_1={fmt(f.eod_1)} [{f.four_fifths}]"
            + (" overlap" if f.overlap_flag else "")
        )
    if report.group_metrics:
        for label, gm in report.group_metrics.items():
            lines.append(f"  group {label}: {format_quoted_line(gm)} (n={gm.cm.total})")
    return "\n".join(lines)


# ------------------------------------------------------------- writers


def write_evaluation_outputs(
    report: EvaluationReport, out_dir: str | Path, stem: str | None = None
) -> dict[str, Path]:
    """Write the JSON contract, CSVs, and figures for one evaluation.

    Returns the paths written, keyed by artifact kind.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or report.scenario.name
    paths: dict[str, Path] = {}

    paths["report"] = out / f"{stem}.report.json"
    paths["report"].write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")

    paths["pairs"] = out / f"{stem}.pairs.csv"
    write_pairs(report.pairs, paths["pairs"])

    if report.fairness is not None:
        paths["fairness"] = out / f"{stem}.fairness.csv"
        write_fairness_csv([(report.fairness, report.scenario.unit)], paths["fairness"])

    if report.roc is not None:
        paths["roc"] = out / f"{stem}.roc.csv"
        write_roc_csv(report.roc, paths["roc"])
        paths["roc_figure"] = out / f"{stem}.roc.png"
        render_roc_figure(report.roc, paths["roc_figure"], stem)

    paths["confusion_figure"] = out / f"{stem}.confusion.png"
    render_confusion_figure(report.metrics, paths["confusion_figure"], stem)
    paths["metrics_figure"] = out / f"{stem}.metrics.png"
    render_metrics_figure(report.metrics, paths["metrics_figure"], stem)
    return paths


def write_reproduction_outputs(
    checks: Sequence[CellCheck], out_dir: str | Path
) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "all_match": all(c.ok for c in checks),
        "cells": [
            {
                "fixture": c.fixture,
                "metric": c.metric,
                "expected": c.expected,
                "actual": c.actual,
                "ok": c.ok,
            }
            for c in checks
        ],
    }
    paths = {"report": out / "reproduce.report.json", "figure": out / "reproduce.png"}
    paths["report"].write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    render_reproduction_figure(checks, paths["figure"])
    return paths
