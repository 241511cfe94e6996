"""Cohort records, grader consensus, delimited IO, and synthetic generation.

A cohort is a flat list of image records: one row per acquired image,
carrying patient demographics and three independent grader opinions.
The synthetic generator reproduces a target demographic profile exactly
in its count identities (sex counts, grade-band counts) for every seed,
and keeps the realised age mean tightly around the requested one by
stratified sampling of the age distribution.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .backends import ModelId
from .domain import Grade, Laterality, Projection, Sex

COHORT_HEADER = (
    "image_id",
    "patient_id",
    "age",
    "sex",
    "laterality",
    "projection",
    "grader1",
    "grader2",
    "grader3",
    "image_path",
)
PREDICTIONS_HEADER = ("image_id", "model", "label", "score")

BAND_NAMES = ("r0r1", "r2", "r3", "r4", "ungradable")

# Image slots acquired per patient: both eyes, both fields.
ACQUISITION_SLOTS = (
    (Laterality.LEFT, Projection.MACULA),
    (Laterality.LEFT, Projection.OPTIC_NERVE),
    (Laterality.RIGHT, Projection.MACULA),
    (Laterality.RIGHT, Projection.OPTIC_NERVE),
)


class CohortFormatError(ValueError):
    """A delimited cohort or predictions file does not match its contract."""


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    patient_id: str
    age: float
    sex: Sex
    laterality: Laterality
    projection: Projection
    grades: tuple[Grade, Grade, Grade]
    image_path: str = ""

    @property
    def consensus(self) -> Grade:
        return consensus_grade(self.grades)


def consensus_grade(grades: Sequence[Grade]) -> Grade:
    """Majority grade of an odd panel; an all-distinct panel resolves to the
    most severe gradable opinion.

    The tie-break is total: only two grades are non-gradable, so any three
    distinct opinions include at least one gradable grade.
    """
    if len(grades) != 3:
        raise ValueError("consensus requires exactly three grader opinions")
    for g in grades:
        if grades.count(g) >= 2:
            return g
    candidates = [g for g in grades if g.gradable]
    return max(candidates, key=lambda g: g.severity)


def group_by_patient(records: Iterable[ImageRecord]) -> dict[str, list[ImageRecord]]:
    grouped: dict[str, list[ImageRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.patient_id, []).append(rec)
    return grouped


@dataclass(frozen=True)
class CohortParams:
    """Target profile for the synthetic generator.

    `counts` assigns each patient to one severity band; every image of the
    patient is graded unanimously inside the band, so the band identities
    hold exactly for any seed.
    """

    n_patients: int = 1046
    female_fraction: float = 0.657
    age_mean: float = 60.4
    age_sd: float = 12.1
    age_min: float = 18.0
    counts: dict[str, int] = field(
        default_factory=lambda: {
            "r0r1": 679,
            "r2": 64,
            "r3": 28,
            "r4": 26,
            "ungradable": 249,
        }
    )

    def __post_init__(self) -> None:
        if self.n_patients <= 0:
            raise ValueError("n_patients must be positive")
        if not 0.0 <= self.female_fraction <= 1.0:
            raise ValueError("female_fraction outside [0, 1]")
        if self.age_sd <= 0:
            raise ValueError("age_sd must be positive")
        if set(self.counts) != set(BAND_NAMES):
            raise ValueError(f"counts must have exactly the keys {BAND_NAMES}")
        if any(not isinstance(v, int) or v < 0 for v in self.counts.values()):
            raise ValueError("band counts must be non-negative integers")
        if sum(self.counts.values()) != self.n_patients:
            raise ValueError("band counts must sum to n_patients")

    @classmethod
    def from_dict(cls, d: dict) -> "CohortParams":
        known = {"n_patients", "female_fraction", "age_mean", "age_sd", "age_min", "counts"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown cohort parameters: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "CohortParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


_BAND_GRADES = {
    "r2": Grade.R2,
    "r3": Grade.R3,
    "r4": Grade.R4,
    "ungradable": Grade.R6,
}


def _stratified_ages(params: CohortParams, rng: np.random.Generator) -> np.ndarray:
    """One draw per equal-probability stratum of the normal age model.

    Stratification pins the realised mean far inside the 3-sigma-of-the-mean
    band regardless of seed; plain iid sampling would only get there with
    99.7% probability.
    """
    n = params.n_patients
    u = (np.arange(n) + rng.random(n)) / n
    ages = params.age_mean + params.age_sd * norm.ppf(u)
    ages = np.maximum(ages, params.age_min)
    ages = np.round(ages, 2)
    rng.shuffle(ages)
    return ages


def generate_cohort(params: CohortParams, seed: int) -> tuple[ImageRecord, ...]:
    """Deterministic synthetic cohort: same params and seed, same records."""
    rng = np.random.default_rng(seed)
    n = params.n_patients
    width = max(4, len(str(n)))

    n_female = int(math.floor(params.female_fraction * n + 0.5))
    sexes = [Sex.FEMALE] * n_female + [Sex.MALE] * (n - n_female)
    sex_order = rng.permutation(n)

    ages = _stratified_ages(params, rng)

    bands: list[str] = []
    for name in BAND_NAMES:
        bands.extend([name] * params.counts[name])
    band_order = rng.permutation(n)

    records: list[ImageRecord] = []
    for i in range(n):
        pid = f"P{i + 1:0{width}d}"
        band = bands[band_order[i]]
        if band == "r0r1":
            grade = Grade.R0 if rng.integers(2) == 0 else Grade.R1
        else:
            grade = _BAND_GRADES[band]
        sex = sexes[sex_order[i]]
        age = float(ages[i])
        for lat, proj in ACQUISITION_SLOTS:
            records.append(
                ImageRecord(
                    image_id=f"{pid}-{lat.value}{proj.value}",
                    patient_id=pid,
                    age=age,
                    sex=sex,
                    laterality=lat,
                    projection=proj,
                    grades=(grade, grade, grade),
                )
            )
    return tuple(records)


def write_cohort(records: Iterable[ImageRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COHORT_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.image_id,
                    r.patient_id,
                    f"{r.age:g}",
                    r.sex.value,
                    r.laterality.value,
                    r.projection.value,
                    r.grades[0].value,
                    r.grades[1].value,
                    r.grades[2].value,
                    r.image_path,
                ]
            )


def read_cohort(path: str | Path) -> tuple[ImageRecord, ...]:
    records: list[ImageRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != COHORT_HEADER:
            raise CohortFormatError(
                f"cohort header must be {','.join(COHORT_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COHORT_HEADER):
                raise CohortFormatError(f"line {lineno}: expected {len(COHORT_HEADER)} fields")
            try:
                records.append(
                    ImageRecord(
                        image_id=row[0],
                        patient_id=row[1],
                        age=float(row[2]),
                        sex=Sex(row[3]),
                        laterality=Laterality(row[4]),
                        projection=Projection(row[5]),
                        grades=(Grade(row[6]), Grade(row[7]), Grade(row[8])),
                        image_path=row[9],
                    )
                )
            except ValueError as exc:
                raise CohortFormatError(f"line {lineno}: {exc}") from exc
    return tuple(records)


@dataclass(frozen=True)
class PredictionRow:
    image_id: str
    model: ModelId
    label: int
    score: float

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score outside [0, 1]")


def write_predictions(rows: Iterable[PredictionRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTIONS_HEADER)
        for r in rows:
            writer.writerow([r.image_id, r.model.value, r.label, f"{r.score:g}"])


def read_predictions(path: str | Path) -> tuple[PredictionRow, ...]:
    rows: list[PredictionRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTIONS_HEADER:
            raise CohortFormatError(
                f"predictions header must be {','.join(PREDICTIONS_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PREDICTIONS_HEADER):
                raise CohortFormatError(f"line {lineno}: expected {len(PREDICTIONS_HEADER)} fields")
            try:
                rows.append(
                    PredictionRow(
                        image_id=row[0],
                        model=ModelId(row[1]),
                        label=int(row[2]),
                        score=float(row[3]),
                    )
                )
            except ValueError as exc:
                raise CohortFormatError(f"line {lineno}: {exc}") from exc
    return tuple(rows)


_POS_SCORE = 0.9
_NEG_SCORE = 0.1


def _image_rows(image_id: str, grade: Grade) -> list[PredictionRow]:
    """Model outputs that would route an image to its consensus grade."""
    if grade is Grade.R6:
        return [PredictionRow(image_id, ModelId.MQ, 0, _NEG_SCORE)]
    rows = [PredictionRow(image_id, ModelId.MQ, 1, _POS_SCORE)]
    if grade in (Grade.R0, Grade.R1):
        rows.append(PredictionRow(image_id, ModelId.M1, 0, _NEG_SCORE))
        rows.append(PredictionRow(image_id, ModelId.M2, 0, _NEG_SCORE))
    elif grade is Grade.R2:
        rows.append(PredictionRow(image_id, ModelId.M1, 0, _NEG_SCORE))
        rows.append(PredictionRow(image_id, ModelId.M2, 1, _POS_SCORE))
    elif grade is Grade.R3:
        rows.append(PredictionRow(image_id, ModelId.M1, 1, _POS_SCORE))
        rows.append(PredictionRow(image_id, ModelId.M3, 0, _NEG_SCORE))
    else:  # R4
        rows.append(PredictionRow(image_id, ModelId.M1, 1, _POS_SCORE))
        rows.append(PredictionRow(image_id, ModelId.M3, 1, _POS_SCORE))
    return rows


def oracle_predictions(records: Iterable[ImageRecord]) -> tuple[PredictionRow, ...]:
    """Predictions that agree with grader consensus on every image."""
    rows: list[PredictionRow] = []
    for rec in records:
        grade = rec.consensus
        if not grade.gradable and grade is not Grade.R6:
            raise ValueError(f"{rec.image_id}: consensus {grade.value} has no model route")
        rows.extend(_image_rows(rec.image_id, grade))
    return tuple(rows)


@dataclass(frozen=True)
class FlipRates:
    """Patient-level error rates applied to oracle predictions.

    Rates are over the referable/non-referable patient classes with
    ungradable patients ignored; a rate of k/n flips exactly
    round(rate * class size) patients, so a rate quoted from a target
    confusion matrix is reproduced exactly.
    """

    false_negative: Fraction = Fraction(0)
    false_positive: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        for name, rate in (
            ("false_negative", self.false_negative),
            ("false_positive", self.false_positive),
        ):
            if not 0 <= rate <= 1:
                raise ValueError(f"{name} outside [0, 1]")


def flip_predictions(
    records: Sequence[ImageRecord],
    rates: FlipRates,
    seed: int,
) -> tuple[PredictionRow, ...]:
    """Oracle predictions with an exact number of patient-level flips.

    A flipped positive patient is rewritten to the mildest non-referable
    route on all its images; a flipped negative patient gets one-eye
    referable findings, which the any-referable rule lifts to the patient.
    """
    by_patient = group_by_patient(records)
    positives = sorted(
        pid
        for pid, recs in by_patient.items()
        if any(r.consensus.gradable and r.consensus.severity >= Grade.R3.severity for r in recs)
    )
    negatives = sorted(
        pid
        for pid, recs in by_patient.items()
        if pid not in set(positives) and any(r.consensus.gradable for r in recs)
    )

    k_fn = int(math.floor(rates.false_negative * len(positives) + Fraction(1, 2)))
    k_fp = int(math.floor(rates.false_positive * len(negatives) + Fraction(1, 2)))
    rng = np.random.default_rng(seed)
    to_negative = set(rng.choice(positives, size=k_fn, replace=False)) if k_fn else set()
    to_positive = set(rng.choice(negatives, size=k_fp, replace=False)) if k_fp else set()

    rows: list[PredictionRow] = []
    for rec in records:
        if rec.patient_id in to_negative:
            rows.extend(_image_rows(rec.image_id, Grade.R0))
        elif rec.patient_id in to_positive:
            grade = Grade.R3 if rec.laterality is Laterality.LEFT else Grade.R0
            rows.extend(_image_rows(rec.image_id, grade))
        else:
            rows.extend(_image_rows(rec.image_id, rec.consensus))
    return tuple(rows)
