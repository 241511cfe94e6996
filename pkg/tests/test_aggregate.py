"""Pairing, aggregation, and scenario plumbing."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retscreen.aggregate import (
    DEFAULT_AGE_BOUNDARY,
    IMAGE_UNIT,
    PATIENT_UNIT,
    SCENARIOS,
    EvalPair,
    ScenarioSpec,
    age_label,
    filter_records,
    image_pairs,
    index_predictions,
    outcome_records,
    pairs_confusion,
    parse_age_boundary,
    patient_pairs,
    predicted_category,
    read_pairs,
    resolve_scenario,
    scenario_pairs,
    screening_pairs,
    truth_category,
    write_pairs,
)
from retscreen.backends import DuplicateKey, MissingPrediction, ModelId
from retscreen.cohort import (
    CohortParams,
    ImageRecord,
    PredictionRow,
    generate_cohort,
    oracle_predictions,
)
from retscreen.domain import (
    Grade,
    Laterality,
    Projection,
    ReferralCategory,
    ReferralScheme,
    Sex,
)

PARAMS = CohortParams()


def record(
    image_id="i1",
    patient_id="p1",
    grade=Grade.R0,
    sex=Sex.FEMALE,
    age=55.0,
    laterality=Laterality.LEFT,
    projection=Projection.MACULA,
):
    return ImageRecord(
        image_id=image_id,
        patient_id=patient_id,
        age=age,
        sex=sex,
        laterality=laterality,
        projection=projection,
        grades=(grade, grade, grade),
    )


def rows_for(image_id, mq=1, m1=0):
    out = [PredictionRow(image_id=image_id, model=ModelId.MQ, label=mq, score=0.9 if mq else 0.1)]
    if mq:
        out.append(
            PredictionRow(image_id=image_id, model=ModelId.M1, label=m1, score=0.9 if m1 else 0.1)
        )
    return out


# ------------------------------------------------------- category rules


def test_truth_category_rules():
    assert truth_category(record(grade=Grade.R2), ReferralScheme.RDR) is (
        ReferralCategory.NON_REFERABLE
    )
    assert truth_category(record(grade=Grade.R3), ReferralScheme.RDR) is (
        ReferralCategory.REFERABLE
    )
    assert truth_category(record(grade=Grade.R6), ReferralScheme.RDR) is (
        ReferralCategory.EXCLUDED
    )
    assert truth_category(record(grade=Grade.R6), ReferralScheme.ACR) is (
        ReferralCategory.REFERABLE
    )
    assert truth_category(record(grade=Grade.R5), ReferralScheme.RDR) is None


def test_predicted_category_uses_quality_first():
    idx = index_predictions(rows_for("i1", mq=0))
    assert predicted_category(idx["i1"], ReferralScheme.RDR, "i1") is ReferralCategory.EXCLUDED
    assert predicted_category(idx["i1"], ReferralScheme.ACR, "i1") is ReferralCategory.REFERABLE


def test_predicted_category_referral_label():
    idx = index_predictions(rows_for("i1", mq=1, m1=1))
    assert predicted_category(idx["i1"], ReferralScheme.RDR, "i1") is ReferralCategory.REFERABLE
    idx = index_predictions(rows_for("i1", mq=1, m1=0))
    assert (
        predicted_category(idx["i1"], ReferralScheme.RDR, "i1") is ReferralCategory.NON_REFERABLE
    )


def test_missing_m1_raises():
    idx = index_predictions(
        [PredictionRow(image_id="i1", model=ModelId.MQ, label=1, score=0.9)]
    )
    with pytest.raises(MissingPrediction):
        predicted_category(idx["i1"], ReferralScheme.RDR, "i1")


def test_missing_image_raises():
    with pytest.raises(MissingPrediction):
        predicted_category({}, ReferralScheme.RDR, "ghost")


def test_duplicate_prediction_rejected():
    rows = rows_for("i1") + rows_for("i1")
    with pytest.raises(DuplicateKey):
        index_predictions(rows)


# ------------------------------------------------------- pairing


def test_image_pairs_drop_excluded_sides():
    records = [
        record(image_id="a", patient_id="p1", grade=Grade.R0),
        record(image_id="b", patient_id="p2", grade=Grade.R6),  # truth excluded
        record(image_id="c", patient_id="p3", grade=Grade.R3),
    ]
    predictions = rows_for("a", mq=1, m1=0) + rows_for("b", mq=1, m1=0) + rows_for("c", mq=0)
    pairs = image_pairs(records, predictions, ReferralScheme.RDR)
    # b: truth excluded; c: prediction excluded (low quality under RDR)
    assert [p.unit_id for p in pairs] == ["a"]

    acr = image_pairs(records, predictions, ReferralScheme.ACR)
    assert {p.unit_id for p in acr} == {"a", "b", "c"}


def test_patient_any_referable_combiner():
    records = [
        record(image_id="a", patient_id="p1", grade=Grade.R0, projection=Projection.MACULA),
        record(image_id="b", patient_id="p1", grade=Grade.R4, projection=Projection.OPTIC_NERVE),
    ]
    predictions = rows_for("a", m1=0) + rows_for("b", m1=1)
    pairs = patient_pairs(records, predictions, ReferralScheme.RDR)
    assert len(pairs) == 1
    assert pairs[0].truth is ReferralCategory.REFERABLE
    assert pairs[0].prediction is ReferralCategory.REFERABLE
    assert pairs[0].unit_id == "p1"
    assert pairs[0].projection is None


def test_patient_all_ungradable_is_dropped_under_rdr():
    records = [
        record(image_id="a", patient_id="p1", grade=Grade.R6),
        record(image_id="b", patient_id="p1", grade=Grade.R6),
    ]
    predictions = rows_for("a", mq=0) + rows_for("b", mq=0)
    assert patient_pairs(records, predictions, ReferralScheme.RDR) == ()
    acr = patient_pairs(records, predictions, ReferralScheme.ACR)
    assert len(acr) == 1 and acr[0].truth is ReferralCategory.REFERABLE


def test_referable_truth_is_monotone_in_images():
    base = [record(image_id="a", patient_id="p1", grade=Grade.R3)]
    extra = base + [record(image_id="b", patient_id="p1", grade=Grade.R0)]
    predictions = rows_for("a", m1=1) + rows_for("b", m1=0)
    t0 = patient_pairs(base, predictions, ReferralScheme.RDR)[0].truth
    t1 = patient_pairs(extra, predictions, ReferralScheme.RDR)[0].truth
    assert t0 is ReferralCategory.REFERABLE
    assert t1 is ReferralCategory.REFERABLE


def test_conservation_of_truth_counts():
    records = generate_cohort(PARAMS, seed=2)
    predictions = oracle_predictions(records)
    pairs = patient_pairs(records, predictions, ReferralScheme.ACR)
    cm = pairs_confusion(pairs)
    positives = sum(1 for p in pairs if p.truth is ReferralCategory.REFERABLE)
    negatives = sum(1 for p in pairs if p.truth is ReferralCategory.NON_REFERABLE)
    assert cm.tp + cm.fn == positives
    assert cm.tn + cm.fp == negatives


def test_schemes_agree_on_fully_gradable_patients():
    records = generate_cohort(PARAMS, seed=3)
    predictions = oracle_predictions(records)
    rdr = {p.unit_id: p.truth for p in patient_pairs(records, predictions, ReferralScheme.RDR)}
    acr = {p.unit_id: p.truth for p in patient_pairs(records, predictions, ReferralScheme.ACR)}
    gradable_patients = {
        pid
        for pid in rdr
        if all(r.consensus.gradable for r in records if r.patient_id == pid)
    }
    for pid in gradable_patients:
        assert rdr[pid] == acr[pid]


def test_paper_cohort_truth_counts():
    records = generate_cohort(PARAMS, seed=0)
    predictions = oracle_predictions(records)
    rdr = patient_pairs(records, predictions, ReferralScheme.RDR)
    acr = patient_pairs(records, predictions, ReferralScheme.ACR)
    assert sum(1 for p in rdr if p.truth is ReferralCategory.REFERABLE) == 54
    assert sum(1 for p in rdr if p.truth is ReferralCategory.NON_REFERABLE) == 743
    assert sum(1 for p in acr if p.truth is ReferralCategory.REFERABLE) == 303
    assert sum(1 for p in acr if p.truth is ReferralCategory.NON_REFERABLE) == 743
    # oracle predictions sit on the diagonal
    for pairset in (rdr, acr):
        cm = pairs_confusion(pairset)
        assert cm.fp == 0 and cm.fn == 0


def test_screening_pairs_match_prediction_pairs(tmp_path):
    from conftest import stub_from_rows, stub_rows
    from retscreen.workflow import MdDecision, PresetMd, ScreeningPolicy, run_screening

    small = CohortParams.from_dict(
        {
            "n_patients": 10,
            "counts": {"r0r1": 5, "r2": 2, "r3": 1, "r4": 1, "ungradable": 1},
        }
    )
    records = generate_cohort(small, seed=1)
    predictions = oracle_predictions(records)
    by_image = {}
    for row in predictions:
        by_image.setdefault(row.image_id, {})[row.model] = row

    manifest = []
    for rec in records:
        rows = by_image[rec.image_id]
        mq = rows[ModelId.MQ]
        manifest.extend(
            stub_rows(
                rec.image_id,
                mq=mq.label,
                m1=rows[ModelId.M1].label if ModelId.M1 in rows else 0,
                m2=rows[ModelId.M2].label if ModelId.M2 in rows else 0,
                m3=rows[ModelId.M3].label if ModelId.M3 in rows else 0,
            )
        )
    backend = stub_from_rows(manifest, tmp_path)
    results = {
        rec.image_id: run_screening(
            rec.image_id, backend, ScreeningPolicy(), PresetMd(MdDecision.PROCEED_UNGRADABLE)
        )
        for rec in records
    }
    for name in ("experiment-1", "experiment-2", "experiment-3"):
        spec = SCENARIOS[name]
        via_rows = scenario_pairs(records, predictions, spec)
        via_screening = screening_pairs(records, results, spec)
        assert via_rows == via_screening


def test_screening_pairs_missing_result():
    records = [record()]
    with pytest.raises(MissingPrediction):
        screening_pairs(records, {}, SCENARIOS["experiment-1"])


# ------------------------------------------------------- serialization


def test_pairs_round_trip(tmp_path):
    records = generate_cohort(PARAMS, seed=1)
    predictions = oracle_predictions(records)
    pairs = scenario_pairs(records, predictions, SCENARIOS["experiment-3"])
    path = tmp_path / "pairs.csv"
    write_pairs(pairs, path)
    assert read_pairs(path) == pairs


def test_patient_pairs_round_trip_without_axes(tmp_path):
    records = generate_cohort(PARAMS, seed=1)
    predictions = oracle_predictions(records)
    pairs = scenario_pairs(records, predictions, SCENARIOS["experiment-1"])
    path = tmp_path / "pairs.csv"
    write_pairs(pairs, path)
    back = read_pairs(path)
    assert back == pairs
    assert back[0].projection is None and back[0].laterality is None


# ------------------------------------------------------- grouping helpers


def test_age_labels():
    assert age_label(59.99) == "<60"
    assert age_label(60.0) == ">=60"
    assert age_label(45.0, boundary=45.0) == ">=45"


def test_parse_age_boundary():
    assert parse_age_boundary("<60", ">=60") == 60.0
    assert parse_age_boundary(">=60", "<60") == 60.0
    assert parse_age_boundary("<45.5", ">=45.5") == 45.5
    with pytest.raises(ValueError):
        parse_age_boundary("<60", ">=65")
    with pytest.raises(ValueError):
        parse_age_boundary("young", "old")


def test_outcome_records_by_sex():
    pairs = [
        EvalPair("p1", ReferralCategory.REFERABLE, ReferralCategory.REFERABLE, Sex.MALE, 50.0),
        EvalPair(
            "p2", ReferralCategory.NON_REFERABLE, ReferralCategory.REFERABLE, Sex.FEMALE, 70.0
        ),
        EvalPair(
            "p3", ReferralCategory.NON_REFERABLE, ReferralCategory.NON_REFERABLE, Sex.UNKNOWN, 40.0
        ),
    ]
    records = outcome_records(pairs, "sex")
    assert len(records) == 2  # unknown sex dropped
    assert {(r.a, r.y, r.r) for r in records} == {("M", 1, 1), ("F", 0, 1)}


def test_outcome_records_by_age_boundary():
    pairs = [
        EvalPair("p1", ReferralCategory.REFERABLE, ReferralCategory.REFERABLE, Sex.MALE, 59.0),
        EvalPair("p2", ReferralCategory.REFERABLE, ReferralCategory.REFERABLE, Sex.MALE, 61.0),
    ]
    records = outcome_records(pairs, "age", age_boundary=60.0)
    assert {r.a for r in records} == {"<60", ">=60"}
    assert DEFAULT_AGE_BOUNDARY == 60.0


def test_outcome_records_skip_missing_axes():
    pairs = [
        EvalPair("p1", ReferralCategory.REFERABLE, ReferralCategory.REFERABLE, Sex.MALE, 50.0)
    ]
    assert outcome_records(pairs, "projection") == ()
    assert outcome_records(pairs, "laterality") == ()


# ------------------------------------------------------- scenarios


def test_catalog_shape():
    assert set(SCENARIOS) == {f"experiment-{i}" for i in range(1, 10)}
    units = {name: s.unit for name, s in SCENARIOS.items()}
    assert units["experiment-1"] == PATIENT_UNIT
    assert units["experiment-3"] == IMAGE_UNIT
    schemes = {name: s.scheme for name, s in SCENARIOS.items()}
    assert schemes["experiment-2"] is ReferralScheme.ACR
    assert schemes["experiment-4"] is ReferralScheme.ACR
    assert schemes["experiment-5"] is ReferralScheme.RDR
    # accuracy scenarios and per-attribute pairings are macula-centered;
    # the projection pairings keep both projections
    for name in ("experiment-1", "experiment-2", "experiment-3", "experiment-4"):
        assert SCENARIOS[name].projections == (Projection.MACULA,)
    for name in ("experiment-5", "experiment-6"):
        assert SCENARIOS[name].projections is None
        assert SCENARIOS[name].fairness.attribute == "projection"
    assert SCENARIOS["experiment-6"].fairness.overlap
    assert SCENARIOS["experiment-7"].fairness.attribute == "sex"
    assert SCENARIOS["experiment-8"].fairness.attribute == "laterality"
    assert SCENARIOS["experiment-9"].fairness.attribute == "age"


def test_filter_records_axes():
    records = [
        record(image_id="a", projection=Projection.MACULA, laterality=Laterality.LEFT),
        record(image_id="b", projection=Projection.OPTIC_NERVE, laterality=Laterality.RIGHT),
    ]
    spec = ScenarioSpec("t", projections=(Projection.MACULA,))
    assert [r.image_id for r in filter_records(records, spec)] == ["a"]
    spec = ScenarioSpec("t", lateralities=(Laterality.RIGHT,))
    assert [r.image_id for r in filter_records(records, spec)] == ["b"]
    spec = ScenarioSpec("t", sexes=(Sex.MALE,))
    assert filter_records(records, spec) == ()
    spec = ScenarioSpec("t", min_age=50.0, max_age=60.0)
    assert len(filter_records(records, spec)) == 2
    spec = ScenarioSpec("t", max_age=55.0)
    assert filter_records(records, spec) == ()  # max_age is exclusive


def test_scenario_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec("t", unit="cohort")
    from retscreen.fairness import GroupSpec

    with pytest.raises(ValueError):
        ScenarioSpec("t", fairness=GroupSpec("site", "x", "y"))


def test_scenario_from_json():
    spec = ScenarioSpec.from_json(
        json.dumps(
            {
                "name": "custom",
                "unit": "image",
                "scheme": "acr",
                "projections": ["A"],
                "fairness": {"attribute": "sex", "unprivileged": "M", "privileged": "F"},
            }
        )
    )
    assert spec.unit == IMAGE_UNIT
    assert spec.scheme is ReferralScheme.ACR
    assert spec.projections == (Projection.MACULA,)
    assert spec.fairness.attribute == "sex"


def test_scenario_from_dict_rejects_unknown():
    with pytest.raises(ValueError):
        ScenarioSpec.from_dict({"name": "x", "weird": 1})


def test_resolve_scenario():
    assert resolve_scenario("experiment-1") is SCENARIOS["experiment-1"]
    inline = resolve_scenario('{"name": "adhoc", "unit": "image"}')
    assert inline.name == "adhoc"
    with pytest.raises(KeyError) as err:
        resolve_scenario("experiment-99")
    assert "experiment-1" in str(err.value)


def test_pooled_projection_pairing_counts():
    records = generate_cohort(PARAMS, seed=5)
    predictions = oracle_predictions(records)
    spec = SCENARIOS["experiment-6"]
    pairs = scenario_pairs(records, predictions, spec)
    # both projections present in an image-unit evaluation without filters
    assert {p.projection for p in pairs} == {Projection.MACULA, Projection.OPTIC_NERVE}
    recs = outcome_records(pairs, "projection")
    # pooled reference group sees every record
    from retscreen.fairness import fairness_report

    report = fairness_report(recs, spec.fairness)
    assert report.overlap_flag
    assert report.n_privileged == len(recs)
