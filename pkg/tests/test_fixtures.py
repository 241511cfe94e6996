"""Embedded reference matrices and the replay dataset."""

import time

from retscreen.aggregate import SCENARIOS, pairs_confusion, scenario_pairs
from retscreen.domain import ReferralScheme
from retscreen.fixtures import (
    COMPARATOR,
    PIPELINE,
    REFERENCE_BY_NAME,
    REFERENCE_RESULTS,
    REPORTED_METRICS,
    check_all,
    check_reference,
    replay_fixture,
    replay_predictions,
)
from retscreen.metrics import compute_metrics


def test_catalog_covers_both_tables():
    assert len(REFERENCE_RESULTS) == 8
    names = {r.name for r in REFERENCE_RESULTS}
    assert names == {
        f"{scheme}-{unit}-{system}"
        for scheme in ("rdr", "acr")
        for unit in ("patient", "image")
        for system in (PIPELINE, COMPARATOR)
    }
    assert set(REFERENCE_BY_NAME) == names


def test_every_reference_cell_reproduces():
    started = time.perf_counter()
    checks = check_all()
    assert len(checks) == 8 * len(REPORTED_METRICS) == 48
    mismatches = [c for c in checks if not c.ok]
    assert mismatches == []
    assert time.perf_counter() - started < 1.0


def test_check_reference_reports_cells():
    ref = REFERENCE_BY_NAME["rdr-patient-pipeline"]
    checks = check_reference(ref)
    by_metric = {c.metric: c for c in checks}
    assert by_metric["f1_negative"].expected == 98
    assert by_metric["f1_negative"].actual == 98
    assert by_metric["sensitivity"].actual == 91


def test_quoted_headline_values():
    headlines = {
        "rdr-patient-pipeline": 98,
        "rdr-patient-comparator": 86,
        "acr-patient-pipeline": 90,
        "acr-patient-comparator": 85,
        "rdr-image-pipeline": 98,
        "rdr-image-comparator": 85,
        "acr-image-pipeline": 92,
        "acr-image-comparator": 84,
    }
    for name, expected in headlines.items():
        report = compute_metrics(REFERENCE_BY_NAME[name].cm)
        assert report.percent("f1_negative") == expected, name


def test_replay_fixture_reproduces_patient_matrix():
    records, manifest = replay_fixture()
    assert len(records) == 1046
    assert len(manifest) > 0

    records, predictions = replay_predictions()
    pairs = scenario_pairs(records, predictions, SCENARIOS["experiment-1"])
    cm = pairs_confusion(pairs)
    assert (cm.tn, cm.fp, cm.fn, cm.tp) == (715, 28, 5, 49)


def test_replay_fixture_acr_counts():
    records, predictions = replay_predictions()
    spec = SCENARIOS["experiment-2"]
    pairs = scenario_pairs(records, predictions, spec)
    positives = sum(1 for p in pairs if p.truth.code == 1)
    assert positives == 54 + 249
    assert len(pairs) == 1046


def test_reference_schemes_and_units():
    ref = REFERENCE_BY_NAME["acr-image-pipeline"]
    assert ref.scheme is ReferralScheme.ACR
    assert ref.unit == "image"
    assert ref.cm.total == 1428 + 180 + 60 + 410
