"""Turn graded images and model predictions into evaluation pairs.

A pair is one evaluated unit (an image, or a patient) with a binary truth
and a binary prediction under a referral scheme, plus the demographics
needed for subgroup slicing. Units that are excluded on either side
(ungradable under the scheme that excludes, or carrying an unsupported
consensus) produce no pair.

Patient-level truth and prediction both follow the any-referable rule:
one referable image makes the patient referable; otherwise one gradable
image makes the patient non-referable; a patient with no usable image is
excluded or referred according to the scheme.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Sequence

if TYPE_CHECKING:
    from .workflow import ScreeningResult

from .backends import DuplicateKey, MissingPrediction, ModelId
from .cohort import CohortFormatError, ImageRecord, PredictionRow, group_by_patient
from .domain import (
    Grade,
    Laterality,
    Projection,
    ReferralCategory,
    ReferralScheme,
    Sex,
    referral_category,
)
from .fairness import GroupSpec, OutcomeRecord
from .metrics import ConfusionMatrix

PAIRS_HEADER = ("unit_id", "truth", "prediction", "sex", "age", "projection", "laterality")

PATIENT_UNIT = "patient"
IMAGE_UNIT = "image"

FAIRNESS_ATTRIBUTES = ("sex", "age", "projection", "laterality")
DEFAULT_AGE_BOUNDARY = 60.0


@dataclass(frozen=True)
class EvalPair:
    unit_id: str
    truth: ReferralCategory
    prediction: ReferralCategory
    sex: Sex
    age: float
    projection: Projection | None = None
    laterality: Laterality | None = None


def index_predictions(
    rows: Iterable[PredictionRow],
) -> dict[str, dict[ModelId, PredictionRow]]:
    index: dict[str, dict[ModelId, PredictionRow]] = {}
    for row in rows:
        per_image = index.setdefault(row.image_id, {})
        if row.model in per_image:
            raise DuplicateKey(f"duplicate prediction for ({row.image_id}, {row.model.value})")
        per_image[row.model] = row
    return index


def predicted_category(
    preds: dict[ModelId, PredictionRow], scheme: ReferralScheme, image_id: str
) -> ReferralCategory:
    """Referral category the recorded model outputs imply for one image.

    A quality row with label 0 marks the image predicted-ungradable and the
    grading models are not consulted; otherwise the referral model's label
    decides. A gradable image without a referral row is a hard error, not a
    silent exclusion.
    """
    mq = preds.get(ModelId.MQ)
    if mq is not None and mq.label == 0:
        return referral_category(Grade.R6, scheme)
    m1 = preds.get(ModelId.M1)
    if m1 is None:
        raise MissingPrediction(f"{image_id}: no referral output for a gradable image")
    return ReferralCategory.REFERABLE if m1.label == 1 else ReferralCategory.NON_REFERABLE


def truth_category(record: ImageRecord, scheme: ReferralScheme) -> ReferralCategory | None:
    """Consensus referral category; None for a consensus outside the scheme's domain."""
    grade = record.consensus
    if grade is Grade.R5:
        return None
    return referral_category(grade, scheme)


def _combine(categories: Sequence[ReferralCategory]) -> ReferralCategory:
    if any(c is ReferralCategory.REFERABLE for c in categories):
        return ReferralCategory.REFERABLE
    if any(c is ReferralCategory.NON_REFERABLE for c in categories):
        return ReferralCategory.NON_REFERABLE
    return ReferralCategory.EXCLUDED


Predictor = Callable[[ImageRecord], ReferralCategory]


def _image_pairs_from(records: Iterable[ImageRecord], predict: Predictor, scheme: ReferralScheme) -> tuple[EvalPair, ...]:
    pairs: list[EvalPair] = []
    for rec in records:
        t = truth_category(rec, scheme)
        if t is None:
            continue
        p = predict(rec)
        if ReferralCategory.EXCLUDED in (t, p):
            continue
        pairs.append(
            EvalPair(
                unit_id=rec.image_id,
                truth=t,
                prediction=p,
                sex=rec.sex,
                age=rec.age,
                projection=rec.projection,
                laterality=rec.laterality,
            )
        )
    return tuple(pairs)


def _patient_pairs_from(records: Iterable[ImageRecord], predict: Predictor, scheme: ReferralScheme) -> tuple[EvalPair, ...]:
    pairs: list[EvalPair] = []
    for pid, recs in group_by_patient(records).items():
        truths: list[ReferralCategory] = []
        preds: list[ReferralCategory] = []
        for rec in recs:
            t = truth_category(rec, scheme)
            if t is None:
                continue
            truths.append(t)
            preds.append(predict(rec))
        t = _combine(truths)
        p = _combine(preds)
        if ReferralCategory.EXCLUDED in (t, p):
            continue
        pairs.append(
            EvalPair(
                unit_id=pid,
                truth=t,
                prediction=p,
                sex=recs[0].sex,
                age=recs[0].age,
            )
        )
    return tuple(pairs)


def _row_predictor(predictions: Iterable[PredictionRow], scheme: ReferralScheme) -> Predictor:
    index = index_predictions(predictions)

    def predict(rec: ImageRecord) -> ReferralCategory:
        return predicted_category(index.get(rec.image_id, {}), scheme, rec.image_id)

    return predict


def image_pairs(
    records: Iterable[ImageRecord],
    predictions: Iterable[PredictionRow],
    scheme: ReferralScheme,
) -> tuple[EvalPair, ...]:
    return _image_pairs_from(records, _row_predictor(predictions, scheme), scheme)


def patient_pairs(
    records: Iterable[ImageRecord],
    predictions: Iterable[PredictionRow],
    scheme: ReferralScheme,
) -> tuple[EvalPair, ...]:
    return _patient_pairs_from(records, _row_predictor(predictions, scheme), scheme)


def pairs_confusion(pairs: Iterable[EvalPair]) -> ConfusionMatrix:
    tp = tn = fp = fn = 0
    for pair in pairs:
        if pair.truth is ReferralCategory.REFERABLE:
            if pair.prediction is ReferralCategory.REFERABLE:
                tp += 1
            else:
                fn += 1
        else:
            if pair.prediction is ReferralCategory.REFERABLE:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def write_pairs(pairs: Iterable[EvalPair], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PAIRS_HEADER)
        for p in pairs:
            writer.writerow(
                [
                    p.unit_id,
                    p.truth.code,
                    p.prediction.code,
                    p.sex.value,
                    f"{p.age:g}",
                    p.projection.value if p.projection else "",
                    p.laterality.value if p.laterality else "",
                ]
            )


def read_pairs(path: str | Path) -> tuple[EvalPair, ...]:
    pairs: list[EvalPair] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PAIRS_HEADER:
            raise CohortFormatError(f"pairs header must be {','.join(PAIRS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PAIRS_HEADER):
                raise CohortFormatError(f"line {lineno}: expected {len(PAIRS_HEADER)} fields")
            try:
                if row[1] not in ("0", "1") or row[2] not in ("0", "1"):
                    raise ValueError("truth and prediction must be 0 or 1")
                pairs.append(
                    EvalPair(
                        unit_id=row[0],
                        truth=ReferralCategory.REFERABLE
                        if row[1] == "1"
                        else ReferralCategory.NON_REFERABLE,
                        prediction=ReferralCategory.REFERABLE
                        if row[2] == "1"
                        else ReferralCategory.NON_REFERABLE,
                        sex=Sex(row[3]),
                        age=float(row[4]),
                        projection=Projection(row[5]) if row[5] else None,
                        laterality=Laterality(row[6]) if row[6] else None,
                    )
                )
            except ValueError as exc:
                raise CohortFormatError(f"line {lineno}: {exc}") from exc
    return tuple(pairs)


def age_label(age: float, boundary: float = DEFAULT_AGE_BOUNDARY) -> str:
    return f"<{boundary:g}" if age < boundary else f">={boundary:g}"


def parse_age_boundary(unprivileged: str, privileged: str) -> float:
    """Boundary shared by a complementary '<X' / '>=X' selector pair."""
    lo = unprivileged if unprivileged.startswith("<") else privileged
    hi = privileged if privileged.startswith(">=") else unprivileged
    if not (lo.startswith("<") and hi.startswith(">=")):
        raise ValueError("age selectors must be a '<X' and '>=X' pair")
    try:
        below, above = float(lo[1:]), float(hi[2:])
    except ValueError as exc:
        raise ValueError(f"age selectors carry no number: {unprivileged!r}, {privileged!r}") from exc
    if below != above:
        raise ValueError("age selectors must share one boundary")
    return below


def outcome_records(
    pairs: Iterable[EvalPair],
    attribute: str,
    age_boundary: float = DEFAULT_AGE_BOUNDARY,
) -> tuple[OutcomeRecord, ...]:
    """Project pairs onto (outcome, label, group value) for fairness runs.

    Pairs whose attribute is unavailable are dropped: missing projection or
    laterality at patient level, and unknown sex for sex slicing.
    """
    if attribute not in FAIRNESS_ATTRIBUTES:
        raise ValueError(f"attribute must be one of {FAIRNESS_ATTRIBUTES}")
    out: list[OutcomeRecord] = []
    for p in pairs:
        if attribute == "sex":
            if p.sex is Sex.UNKNOWN:
                continue
            value = p.sex.value
        elif attribute == "age":
            value = age_label(p.age, age_boundary)
        elif attribute == "projection":
            if p.projection is None:
                continue
            value = p.projection.value
        else:
            if p.laterality is None:
                continue
            value = p.laterality.value
        out.append(OutcomeRecord(r=p.prediction.code, y=p.truth.code, a=value))
    return tuple(out)


@dataclass(frozen=True)
class ScenarioSpec:
    """One named evaluation: unit, scheme, record filters, optional pairing.

    Filters are independent and a None filter keeps everything. Patient
    units are built from each patient's images that survive the filters,
    so a projection filter narrows the evidence per patient rather than
    dropping patients.
    """

    name: str
    unit: str = PATIENT_UNIT
    scheme: ReferralScheme = ReferralScheme.RDR
    projections: tuple[Projection, ...] | None = None
    lateralities: tuple[Laterality, ...] | None = None
    sexes: tuple[Sex, ...] | None = None
    min_age: float | None = None
    max_age: float | None = None
    fairness: GroupSpec | None = None

    def __post_init__(self) -> None:
        if self.unit not in (PATIENT_UNIT, IMAGE_UNIT):
            raise ValueError(f"unit must be '{PATIENT_UNIT}' or '{IMAGE_UNIT}'")
        if self.fairness is not None and self.fairness.attribute not in FAIRNESS_ATTRIBUTES:
            raise ValueError(f"fairness attribute must be one of {FAIRNESS_ATTRIBUTES}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = {
            "name",
            "unit",
            "scheme",
            "projections",
            "lateralities",
            "sexes",
            "min_age",
            "max_age",
            "fairness",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "scheme" in kwargs:
            kwargs["scheme"] = ReferralScheme(str(kwargs["scheme"]).upper())
        if kwargs.get("projections") is not None:
            kwargs["projections"] = tuple(Projection(v) for v in kwargs["projections"])
        if kwargs.get("lateralities") is not None:
            kwargs["lateralities"] = tuple(Laterality(v) for v in kwargs["lateralities"])
        if kwargs.get("sexes") is not None:
            kwargs["sexes"] = tuple(Sex(s) for s in kwargs["sexes"])
        if kwargs.get("fairness") is not None:
            f = kwargs["fairness"]
            kwargs["fairness"] = GroupSpec(
                attribute=f["attribute"],
                unprivileged=tuple(f["unprivileged"])
                if isinstance(f["unprivileged"], list)
                else f["unprivileged"],
                privileged=tuple(f["privileged"])
                if isinstance(f["privileged"], list)
                else f["privileged"],
            )
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))


def filter_records(records: Iterable[ImageRecord], spec: ScenarioSpec) -> tuple[ImageRecord, ...]:
    out = []
    for rec in records:
        if spec.projections is not None and rec.projection not in spec.projections:
            continue
        if spec.lateralities is not None and rec.laterality not in spec.lateralities:
            continue
        if spec.sexes is not None and rec.sex not in spec.sexes:
            continue
        if spec.min_age is not None and rec.age < spec.min_age:
            continue
        if spec.max_age is not None and not rec.age < spec.max_age:
            continue
        out.append(rec)
    return tuple(out)


def scenario_pairs(
    records: Iterable[ImageRecord],
    predictions: Iterable[PredictionRow],
    spec: ScenarioSpec,
) -> tuple[EvalPair, ...]:
    kept = filter_records(records, spec)
    if spec.unit == PATIENT_UNIT:
        return patient_pairs(kept, predictions, spec.scheme)
    return image_pairs(kept, predictions, spec.scheme)


def screening_pairs(
    records: Iterable[ImageRecord],
    results: Mapping[str, "ScreeningResult"],
    spec: ScenarioSpec,
) -> tuple[EvalPair, ...]:
    """Pairs with predictions taken from live screening dispositions.

    Same filter and combining semantics as `scenario_pairs`; the per-image
    prediction is the referral category the workflow disposition implies.
    """

    def predict(rec: ImageRecord) -> ReferralCategory:
        result = results.get(rec.image_id)
        if result is None:
            raise MissingPrediction(f"{rec.image_id}: no screening result")
        return result.referral(spec.scheme)

    kept = filter_records(records, spec)
    if spec.unit == PATIENT_UNIT:
        return _patient_pairs_from(kept, predict, spec.scheme)
    return _image_pairs_from(kept, predict, spec.scheme)


# The nine standing evaluations. 1-4 measure referral accuracy on
# macula-centered images (patient then image units, each scheme); 5-9 are
# bias pairings: the monitored/reference roles follow the published
# pairings, with the pooled reference in 6 overlapping the monitored group.
_MACULA_ONLY = (Projection.MACULA,)
SCENARIOS: dict[str, ScenarioSpec] = {
    "experiment-1": ScenarioSpec(
        "experiment-1", PATIENT_UNIT, ReferralScheme.RDR, projections=_MACULA_ONLY
    ),
    "experiment-2": ScenarioSpec(
        "experiment-2", PATIENT_UNIT, ReferralScheme.ACR, projections=_MACULA_ONLY
    ),
    "experiment-3": ScenarioSpec(
        "experiment-3", IMAGE_UNIT, ReferralScheme.RDR, projections=_MACULA_ONLY
    ),
    "experiment-4": ScenarioSpec(
        "experiment-4", IMAGE_UNIT, ReferralScheme.ACR, projections=_MACULA_ONLY
    ),
    "experiment-5": ScenarioSpec(
        "experiment-5",
        IMAGE_UNIT,
        ReferralScheme.RDR,
        fairness=GroupSpec("projection", Projection.OPTIC_NERVE.value, Projection.MACULA.value),
    ),
    "experiment-6": ScenarioSpec(
        "experiment-6",
        IMAGE_UNIT,
        ReferralScheme.RDR,
        fairness=GroupSpec(
            "projection",
            Projection.MACULA.value,
            (Projection.MACULA.value, Projection.OPTIC_NERVE.value),
        ),
    ),
    "experiment-7": ScenarioSpec(
        "experiment-7",
        PATIENT_UNIT,
        ReferralScheme.RDR,
        projections=_MACULA_ONLY,
        fairness=GroupSpec("sex", Sex.MALE.value, Sex.FEMALE.value),
    ),
    "experiment-8": ScenarioSpec(
        "experiment-8",
        IMAGE_UNIT,
        ReferralScheme.RDR,
        projections=_MACULA_ONLY,
        fairness=GroupSpec("laterality", Laterality.LEFT.value, Laterality.RIGHT.value),
    ),
    "experiment-9": ScenarioSpec(
        "experiment-9",
        PATIENT_UNIT,
        ReferralScheme.RDR,
        projections=_MACULA_ONLY,
        fairness=GroupSpec("age", "<60", ">=60"),
    ),
}


def resolve_scenario(spec_or_name: str) -> ScenarioSpec:
    """Accept a standing scenario name or an inline JSON object."""
    text = spec_or_name.strip()
    if text.startswith("{"):
        return ScenarioSpec.from_json(text)
    if text in SCENARIOS:
        return SCENARIOS[text]
    raise KeyError(
        f"unknown scenario {spec_or_name!r}; named scenarios: {', '.join(sorted(SCENARIOS))}"
    )


def rename_scenario(spec: ScenarioSpec, name: str) -> ScenarioSpec:
    return replace(spec, name=name)
