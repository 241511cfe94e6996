"""Command-line entry points.

Subcommands: `reproduce` (recompute the embedded reference tables),
`evaluate` (cohort + predictions -> scenario report), `fairness` (pairs
CSV -> subgroup report), `simulate` (synthetic cohort + predictions), and
`serve` (the HTTP service).

Exit codes are a stable contract: 0 success, 1 reproduction mismatch,
2 input error, 3 environment error.
"""

from __future__ import annotations

import json
import socket
import sys
from fractions import Fraction
from pathlib import Path

import click

from .aggregate import (
    parse_age_boundary,
    read_pairs,
    resolve_scenario,
    outcome_records,
)
from .backends import (
    BackendError,
    DuplicateKey,
    HttpBackend,
    ManifestParseError,
    MissingPrediction,
    StubBackend,
)
from .cohort import (
    CohortFormatError,
    CohortParams,
    FlipRates,
    flip_predictions,
    generate_cohort,
    read_cohort,
    read_predictions,
    write_cohort,
    write_predictions,
)
from .fairness import DEFAULT_DI_BOUNDS, EmptyGroup, GroupSpec, fairness_report
from .fixtures import check_all
from .metrics import ConfusionMatrix, compute_metrics
from .report import (
    EmptyInput,
    evaluate_scenario,
    fairness_csv_row,
    format_checks,
    format_evaluation,
    format_quoted_line,
    unit_type_label,
    write_evaluation_outputs,
    write_fairness_csv,
    write_reproduction_outputs,
)
from .service import ServiceConfig, create_app
from .workflow import ScreeningPolicy

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_ENVIRONMENT = 3

INPUT_ERRORS = (
    CohortFormatError,
    ManifestParseError,
    DuplicateKey,
    MissingPrediction,
    EmptyInput,
    EmptyGroup,
    BackendError,
    OSError,
    ValueError,
    KeyError,
)


def _fail_input(exc: Exception) -> None:
    message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_INPUT)


def _parse_matrix(spec: str) -> ConfusionMatrix:
    """Parse 'TP=49,FP=28,FN=5,TN=715' (order and case free)."""
    counts: dict[str, int] = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        key = key.strip().lower()
        if key not in ("tp", "tn", "fp", "fn"):
            raise ValueError(f"unknown confusion cell {key!r}")
        if key in counts:
            raise ValueError(f"cell {key!r} given twice")
        counts[key] = int(value.strip())
    missing = {"tp", "tn", "fp", "fn"} - set(counts)
    if missing:
        raise ValueError(f"matrix spec lacks cells: {', '.join(sorted(missing))}")
    return ConfusionMatrix(**counts)


def _parse_flip_rates(spec: str) -> FlipRates:
    """Parse 'fn=5/54,fp=28/743'; fractions or decimals; empty means none."""
    rates: dict[str, Fraction] = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        key = key.strip().lower()
        if key not in ("fn", "fp"):
            raise ValueError(f"unknown flip-rate key {key!r}")
        rates[key] = Fraction(value.strip())
    return FlipRates(
        false_negative=rates.get("fn", Fraction(0)),
        false_positive=rates.get("fp", Fraction(0)),
    )


def _parse_selector(value: str) -> str | tuple[str, ...]:
    if "," in value:
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return value


def _parse_backend(spec: str):
    if spec.startswith("stub:"):
        return StubBackend.from_file(spec[len("stub:") :])
    if spec.startswith(("http://", "https://")):
        return HttpBackend(spec)
    if spec.startswith("http:"):
        return HttpBackend(spec[len("http:") :])
    raise ValueError(f"backend must be stub:PATH or http:URL, got {spec!r}")


@click.group()
def main() -> None:
    """Retinal screening pipeline and evaluation harness."""


@main.command()
@click.option("--matrix", "matrix_spec", default=None, help="Custom counts, e.g. TP=49,FP=28,FN=5,TN=715.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for the JSON report and figure.")
def reproduce(matrix_spec: str | None, out_dir: str | None) -> None:
    """Recompute the embedded reference tables and compare percentages."""
    try:
        if matrix_spec is not None:
            cm = _parse_matrix(matrix_spec)
            report = compute_metrics(cm)
            click.echo(
                f"custom  TN={cm.tn} FP={cm.fp} FN={cm.fn} TP={cm.tp}  "
                f"{format_quoted_line(report)}"
            )
            if out_dir:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                doc = report.as_dict()
                (Path(out_dir) / "matrix.report.json").write_text(
                    json.dumps(doc, indent=2) + "\n", encoding="utf-8"
                )
            sys.exit(EXIT_OK)
        checks = check_all()
    except INPUT_ERRORS as exc:
        _fail_input(exc)
    click.echo(format_checks(checks))
    if out_dir:
        write_reproduction_outputs(checks, out_dir)
    bad = [c for c in checks if not c.ok]
    if bad:
        click.echo("")
        for c in bad:
            click.echo(f"MISMATCH {c.fixture} {c.metric}: expected {c.expected}, got {c.actual}")
        sys.exit(EXIT_MISMATCH)
    click.echo("all reference cells match")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--predictions", "predictions_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--scenario", required=True,
              help="Named scenario (experiment-1..9), inline JSON, or a JSON file path.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="reports",
              show_default=True, help="Directory for report files and figures.")
def evaluate(cohort_path: str, predictions_path: str, scenario: str, out_dir: str) -> None:
    """Evaluate a cohort's predictions under a scenario."""
    try:
        text = scenario
        candidate = Path(scenario)
        if not scenario.strip().startswith("{") and candidate.suffix == ".json" and candidate.exists():
            text = candidate.read_text(encoding="utf-8")
        spec = resolve_scenario(text)
        records = read_cohort(cohort_path)
        predictions = read_predictions(predictions_path)
        result = evaluate_scenario(records, predictions, spec)
        paths = write_evaluation_outputs(result, out_dir)
    except INPUT_ERRORS as exc:
        _fail_input(exc)
    click.echo(format_evaluation(result))
    click.echo(f"report written to {paths['report']}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--attribute", required=True,
              type=click.Choice(["sex", "age", "projection", "laterality"]))
@click.option("--unprivileged", required=True, help="Monitored value(s), comma-pooled.")
@click.option("--privileged", required=True, help="Reference value(s), comma-pooled.")
@click.option("--di-bounds", default=None, help="Override the pass band, e.g. 0.8,1.25.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for fairness.csv and fairness.json.")
def fairness(pairs_path: str, attribute: str, unprivileged: str, privileged: str,
             di_bounds: str | None, out_dir: str | None) -> None:
    """Compute subgroup fairness over an evaluation pairs file."""
    try:
        pairs = read_pairs(pairs_path)
        group = GroupSpec(
            attribute=attribute,
            unprivileged=_parse_selector(unprivileged),
            privileged=_parse_selector(privileged),
        )
        boundary = 60.0
        if attribute == "age":
            boundary = parse_age_boundary(
                GroupSpec.label(group.unprivileged), GroupSpec.label(group.privileged)
            )
        bounds = DEFAULT_DI_BOUNDS
        if di_bounds is not None:
            lo, _, hi = di_bounds.partition(",")
            bounds = (Fraction(lo.strip()), Fraction(hi.strip()))
            if not 0 < bounds[0] <= bounds[1]:
                raise ValueError("di-bounds must satisfy 0 < lower <= upper")
        outcomes = outcome_records(pairs, attribute, boundary)
        report = fairness_report(outcomes, group, bounds)
    except INPUT_ERRORS as exc:
        _fail_input(exc)

    unit = "image" if pairs and all(p.projection is not None for p in pairs) else "patient"

    def fmt(v):
        return "NA" if v is None else f"{float(v):.6g}"

    click.echo(
        f"{attribute} ({unit_type_label(unit)}) "
        f"{GroupSpec.label(group.unprivileged)} vs {GroupSpec.label(group.privileged)}: "
        f"DI={fmt(report.di)} EOD_0={fmt(report.eod_0)} EOD_1={fmt(report.eod_1)} "
        f"[{report.four_fifths}]" + (" overlap" if report.overlap_flag else "")
    )
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_fairness_csv([(report, unit)], out / "fairness.csv")
        (out / "fairness.json").write_text(
            json.dumps({**report.as_dict(), "unit": unit}, indent=2) + "\n", encoding="utf-8"
        )
    sys.exit(EXIT_OK)


@main.command()
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Cohort parameter JSON; defaults to the built-in profile.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--flip-rates", "flip_spec", default="", help="e.g. fn=5/54,fp=28/743")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def simulate(params_path: str | None, seed: int, flip_spec: str, out_dir: str) -> None:
    """Generate a synthetic cohort and (optionally corrupted) predictions."""
    try:
        params = CohortParams.from_json(params_path) if params_path else CohortParams()
        rates = _parse_flip_rates(flip_spec)
        records = generate_cohort(params, seed)
        predictions = flip_predictions(records, rates, seed)
    except INPUT_ERRORS as exc:
        _fail_input(exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_cohort(records, out / "cohort.csv")
    write_predictions(predictions, out / "predictions.csv")
    click.echo(
        f"wrote {len(records)} image records for {params.n_patients} patients "
        f"and {len(predictions)} prediction rows to {out}"
    )
    sys.exit(EXIT_OK)


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--backend", "backend_spec", required=True, help="stub:PATH or http:URL.")
@click.option("--store", "store_path", type=click.Path(dir_okay=False), default=None,
              help="Persistence file (JSON-lines event log).")
@click.option("--cohort", "cohort_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--predictions", "predictions_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--token", default=None, help="Static bearer token; unset serves unauthenticated.")
@click.option("--max-retakes", type=int, default=2, show_default=True)
@click.option("--quality-threshold", type=float, default=0.5, show_default=True)
def serve(port: int, host: str, backend_spec: str, store_path: str | None,
          cohort_path: str | None, predictions_path: str | None, token: str | None,
          max_retakes: int, quality_threshold: float) -> None:
    """Run the screening service."""
    import uvicorn

    try:
        backend = _parse_backend(backend_spec)
        policy = ScreeningPolicy(quality_threshold=quality_threshold, max_retakes=max_retakes)
    except INPUT_ERRORS as exc:
        _fail_input(exc)

    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
        probe.close()
    except OSError as exc:
        click.echo(f"error: cannot bind {host}:{port}: {exc}", err=True)
        sys.exit(EXIT_ENVIRONMENT)

    app = create_app(
        ServiceConfig(
            backend=backend,
            policy=policy,
            store_path=store_path,
            cohort_path=cohort_path,
            predictions_path=predictions_path,
            token=token,
        )
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
