"""Embedded reference results and replay fixtures.

The published validation study reports, for two systems (the screening
pipeline and a commercial comparator), referral confusion matrices at the
patient and image level under both referral schemes, together with rounded
integer percentages. Both are embedded here so the reproduction command
needs no network or external data: recomputing the percentages from the
raw counts and matching the published ones is the check.

The headline F1 the study quotes is the negative class's (NPV paired with
specificity), reflecting that non-referable is the majority outcome of a
screening population.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backends import CLASSIFIER_MODELS, ModelId
from .cohort import ImageRecord, PredictionRow
from .domain import Grade, Laterality, Projection, ReferralScheme, Sex
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics

# Metrics the reference tables quote, in their printed order.
REPORTED_METRICS = ("f1_negative", "sensitivity", "specificity", "ppv", "npv", "accuracy")

PIPELINE = "pipeline"
COMPARATOR = "comparator"


@dataclass(frozen=True)
class ReferenceResult:
    """One published table row: raw counts plus quoted integer percentages."""

    name: str
    system: str
    unit: str
    scheme: ReferralScheme
    cm: ConfusionMatrix
    expected_percent: dict[str, int]

    def metrics(self) -> MetricsReport:
        return compute_metrics(self.cm)


def _ref(
    name: str,
    system: str,
    unit: str,
    scheme: ReferralScheme,
    tn: int,
    fp: int,
    fn: int,
    tp: int,
    expected: tuple[int, int, int, int, int, int],
) -> ReferenceResult:
    return ReferenceResult(
        name=name,
        system=system,
        unit=unit,
        scheme=scheme,
        cm=ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn),
        expected_percent=dict(zip(REPORTED_METRICS, expected)),
    )


# Counts in source order (TN, FP, FN, TP); expected percentages in the
# quoted order F1-negative; (sensitivity, specificity, PPV, NPV, accuracy).
REFERENCE_RESULTS: tuple[ReferenceResult, ...] = (
    _ref("rdr-patient-pipeline", PIPELINE, "patient", ReferralScheme.RDR,
         715, 28, 5, 49, (98, 91, 96, 64, 99, 96)),
    _ref("rdr-patient-comparator", COMPARATOR, "patient", ReferralScheme.RDR,
         562, 181, 1, 53, (86, 98, 76, 23, 100, 77)),
    _ref("acr-patient-pipeline", PIPELINE, "patient", ReferralScheme.ACR,
         637, 106, 33, 270, (90, 89, 86, 72, 95, 87)),
    _ref("acr-patient-comparator", COMPARATOR, "patient", ReferralScheme.ACR,
         562, 181, 21, 282, (85, 93, 76, 61, 96, 81)),
    _ref("rdr-image-pipeline", PIPELINE, "image", ReferralScheme.RDR,
         1550, 58, 11, 89, (98, 89, 96, 61, 99, 96)),
    _ref("rdr-image-comparator", COMPARATOR, "image", ReferralScheme.RDR,
         1186, 422, 2, 98, (85, 98, 74, 19, 100, 75)),
    _ref("acr-image-pipeline", PIPELINE, "image", ReferralScheme.ACR,
         1428, 180, 60, 410, (92, 87, 89, 69, 96, 88)),
    _ref("acr-image-comparator", COMPARATOR, "image", ReferralScheme.ACR,
         1186, 422, 33, 437, (84, 93, 74, 51, 97, 78)),
)

REFERENCE_BY_NAME = {ref.name: ref for ref in REFERENCE_RESULTS}


@dataclass(frozen=True)
class CellCheck:
    """Recomputed-vs-quoted comparison for one metric of one reference row."""

    fixture: str
    metric: str
    expected: int
    actual: int

    @property
    def ok(self) -> bool:
        return self.expected == self.actual


def check_reference(ref: ReferenceResult) -> list[CellCheck]:
    report = ref.metrics()
    checks = []
    for metric in REPORTED_METRICS:
        actual = report.percent(metric)
        if actual is None:
            raise ValueError(f"{ref.name}: {metric} is undefined on the embedded counts")
        checks.append(
            CellCheck(
                fixture=ref.name,
                metric=metric,
                expected=ref.expected_percent[metric],
                actual=actual,
            )
        )
    return checks


def check_all(refs: tuple[ReferenceResult, ...] = REFERENCE_RESULTS) -> list[CellCheck]:
    checks: list[CellCheck] = []
    for ref in refs:
        checks.extend(check_reference(ref))
    return checks


def _classifier_row(image_id: str, model: ModelId, label: int) -> dict:
    return {
        "image_id": image_id,
        "model": model.value,
        "output": {"label": label, "score": 0.9 if label == 1 else 0.1},
    }


def _anatomy_row(image_id: str) -> dict:
    det = {"present": True, "score": 0.9}
    return {"image_id": image_id, "model": ModelId.MA.value, "output": {"macula": det, "optic_nerve": det}}


def replay_fixture() -> tuple[tuple[ImageRecord, ...], list[dict]]:
    """Cohort records and stub-manifest rows replaying the reference
    patient-level outcomes of the pipeline.

    One macula image per patient. Sections in order: true negatives, false
    positives, false negatives, true positives, then ungradable patients,
    matching the patient counts behind `rdr-patient-pipeline` (the
    ungradable block only participates under the scheme that refers it).
    """
    ref = REFERENCE_BY_NAME["rdr-patient-pipeline"].cm
    sections = (
        ("tn", ref.tn, Grade.R0, False),
        ("fp", ref.fp, Grade.R0, True),
        ("fn", ref.fn, Grade.R3, False),
        ("tp", ref.tp, Grade.R3, True),
        ("ungradable", 249, Grade.R6, False),
    )
    records: list[ImageRecord] = []
    manifest: list[dict] = []
    i = 0
    for _, count, grade, predicted_referable in sections:
        for _ in range(count):
            i += 1
            pid = f"RP{i:04d}"
            image_id = f"{pid}-LA"
            records.append(
                ImageRecord(
                    image_id=image_id,
                    patient_id=pid,
                    age=60.0,
                    sex=Sex.FEMALE if i % 2 else Sex.MALE,
                    laterality=Laterality.LEFT,
                    projection=Projection.MACULA,
                    grades=(grade, grade, grade),
                )
            )
            manifest.append(_anatomy_row(image_id))
            if grade is Grade.R6:
                manifest.append(_classifier_row(image_id, ModelId.MQ, 0))
                continue
            manifest.append(_classifier_row(image_id, ModelId.MQ, 1))
            if predicted_referable:
                manifest.append(_classifier_row(image_id, ModelId.M1, 1))
                manifest.append(_classifier_row(image_id, ModelId.M3, 0))
            else:
                manifest.append(_classifier_row(image_id, ModelId.M1, 0))
                manifest.append(_classifier_row(image_id, ModelId.M2, 0))
    return tuple(records), manifest


def replay_predictions() -> tuple[tuple[ImageRecord, ...], tuple[PredictionRow, ...]]:
    """The replay fixture in prediction-row form for the evaluation path."""
    records, manifest = replay_fixture()
    classifier = {m.value for m in CLASSIFIER_MODELS}
    rows = tuple(
        PredictionRow(
            image_id=row["image_id"],
            model=ModelId(row["model"]),
            label=row["output"]["label"],
            score=row["output"]["score"],
        )
        for row in manifest
        if row["model"] in classifier
    )
    return records, rows
