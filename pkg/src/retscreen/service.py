"""HTTP/JSON service: screening studies, expert feedback, evaluation reports.

Studies collect screened images. A submission that trips the quality gate
does not block on a human: the reply is `awaiting_md_decision` and a
follow-up call to the md-decision endpoint completes the screening. Expert
feedback is append-only and never touches a stored screening result.

State lives in a single-file store: a JSON-lines event log that is
compacted to one snapshot line on clean shutdown. Every mutation is an
event; restart replays the log, so ids and results survive restarts.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .aggregate import resolve_scenario
from .backends import Backend, BackendError, ModelId
from .cohort import (
    CohortFormatError,
    ImageRecord,
    PredictionRow,
    read_cohort,
    read_predictions,
)
from .domain import Disposition, Grade
from .fixtures import replay_predictions
from .preprocess import InvalidImage, NoFundusDetected, decode_image, preprocess
from .report import EmptyInput, evaluate_scenario
from .workflow import (
    MdDecision,
    PresetMd,
    ScreeningPolicy,
    ScreeningResult,
    StageRecord,
    quality_gate,
    run_screening,
)

PREPROCESS_STAGE = "preprocess"

STATUS_COMPLETE = "complete"
STATUS_AWAITING_MD = "awaiting_md_decision"


class ApiError(Exception):
    """Error with a stable wire code; rendered as {"error", "detail"}."""

    def __init__(self, code: str, status: int, detail: str = ""):
        super().__init__(detail or code)
        self.code = code
        self.status = status
        self.detail = detail or code


@dataclass
class ImageEntry:
    image_id: str
    metadata: dict
    attempts: int
    status: str
    pending_reason: str | None = None
    result: ScreeningResult | None = None

    def as_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "metadata": self.metadata,
            "attempts": self.attempts,
            "status": self.status,
            "pending_reason": self.pending_reason,
            "result": self.result.as_dict() if self.result else None,
        }


@dataclass
class Study:
    study_id: str
    created: float
    status: str = "open"
    images: dict[str, ImageEntry] = field(default_factory=dict)


class StudyStore:
    """In-memory state plus the append-only event log behind it.

    Mutations go through events so that live state and replayed state are
    built by the same code path.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.lock = threading.RLock()
        self.studies: dict[str, Study] = {}
        self.feedback: list[dict] = []
        if self.path and self.path.exists():
            self._load()

    # -- event plumbing

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        kind = event["t"]
        if kind == "snapshot":
            self.studies = {}
            self.feedback = list(event["feedback"])
            for sd in event["studies"]:
                study = Study(study_id=sd["study_id"], created=sd["created"], status=sd["status"])
                for ed in sd["images"]:
                    study.images[ed["image_id"]] = ImageEntry(
                        image_id=ed["image_id"],
                        metadata=ed["metadata"],
                        attempts=ed["attempts"],
                        status=ed["status"],
                        pending_reason=ed["pending_reason"],
                        result=ScreeningResult.from_dict(ed["result"]) if ed["result"] else None,
                    )
                self.studies[study.study_id] = study
        elif kind == "study_created":
            self.studies[event["study_id"]] = Study(
                study_id=event["study_id"], created=event["created"]
            )
        elif kind == "study_closed":
            self.studies[event["study_id"]].status = "closed"
        elif kind == "image_submitted":
            study = self.studies[event["study_id"]]
            study.images[event["image_id"]] = ImageEntry(
                image_id=event["image_id"],
                metadata=event["metadata"],
                attempts=event["attempts"],
                status=event["status"],
                pending_reason=event["pending_reason"],
                result=ScreeningResult.from_dict(event["result"]) if event["result"] else None,
            )
        elif kind == "md_decided":
            entry = self.studies[event["study_id"]].images[event["image_id"]]
            entry.status = STATUS_COMPLETE
            entry.pending_reason = None
            entry.result = ScreeningResult.from_dict(event["result"])
        elif kind == "feedback":
            self.feedback.append(event["entry"])
        else:
            raise ValueError(f"unknown event type {kind!r}")

    def record(self, event: dict) -> None:
        """Apply an event and append it to the log."""
        self._apply(event)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event) + "\n")
                fh.flush()

    def snapshot(self) -> None:
        """Compact the log to a single snapshot line (atomic rewrite)."""
        if not self.path:
            return
        with self.lock:
            doc = {
                "t": "snapshot",
                "feedback": self.feedback,
                "studies": [
                    {
                        "study_id": s.study_id,
                        "created": s.created,
                        "status": s.status,
                        "images": [e.as_dict() for e in s.images.values()],
                    }
                    for s in self.studies.values()
                ],
            }
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            tmp.write_text(json.dumps(doc) + "\n", encoding="utf-8")
            tmp.replace(self.path)


@dataclass
class ServiceConfig:
    backend: Backend
    policy: ScreeningPolicy = ScreeningPolicy()
    store_path: str | Path | None = None
    cohort_path: str | Path | None = None
    predictions_path: str | Path | None = None
    token: str | None = None


def _result_with_preprocess(result: ScreeningResult, provenance: dict) -> ScreeningResult:
    stage = StageRecord(stage=PREPROCESS_STAGE, output=provenance, decision="standardized")
    return replace(result, stages=(stage,) + result.stages)


def create_app(config: ServiceConfig) -> FastAPI:
    store = StudyStore(config.store_path)
    # Standardized pixels for pending screenings, kept out of the log; a
    # restart falls back to id-keyed backend lookups.
    pixel_cache: dict[tuple[str, str], np.ndarray] = {}
    dataset_cache: dict[str, tuple] = {}

    @asynccontextmanager
    async def _lifespan(_app: FastAPI):
        yield
        store.snapshot()

    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None, lifespan=_lifespan)

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse({"error": exc.code, "detail": exc.detail}, status_code=exc.status)

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if config.token and request.url.path != "/v1/health":
            expected = f"Bearer {config.token}"
            if request.headers.get("authorization") != expected:
                return JSONResponse(
                    {"error": "unauthorized", "detail": "missing or wrong bearer token"},
                    status_code=401,
                )
        return await call_next(request)

    async def _json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise ApiError("invalid_request", 422, "body must be a JSON object")
        if not isinstance(body, dict):
            raise ApiError("invalid_request", 422, "body must be a JSON object")
        return body

    def _study(study_id: str) -> Study:
        study = store.studies.get(study_id)
        if study is None:
            raise ApiError("unknown_study", 404, f"no study {study_id!r}")
        return study

    def _dataset() -> tuple[tuple[ImageRecord, ...], tuple[PredictionRow, ...]]:
        """Configured cohort + predictions, or the embedded replay fixture."""
        if "data" not in dataset_cache:
            if config.cohort_path and config.predictions_path:
                try:
                    dataset_cache["data"] = (
                        read_cohort(config.cohort_path),
                        read_predictions(config.predictions_path),
                    )
                except (OSError, CohortFormatError) as exc:
                    raise ApiError("dataset_error", 500, str(exc))
            else:
                dataset_cache["data"] = replay_predictions()
        return dataset_cache["data"]

    @app.get("/v1/health")
    async def health() -> dict:
        return {"status": "ok"}

    @app.post("/v1/studies", status_code=201)
    async def create_study() -> dict:
        with store.lock:
            study_id = uuid.uuid4().hex[:12]
            store.record({"t": "study_created", "study_id": study_id, "created": time.time()})
            return {"study_id": study_id, "status": "open"}

    @app.post("/v1/studies/{study_id}/close")
    async def close_study(study_id: str) -> dict:
        with store.lock:
            study = _study(study_id)
            if study.status != "closed":
                store.record({"t": "study_closed", "study_id": study_id})
            return {"study_id": study_id, "status": "closed"}

    @app.get("/v1/studies/{study_id}/results")
    async def get_results(study_id: str) -> dict:
        with store.lock:
            study = _study(study_id)
            return {
                "study_id": study.study_id,
                "status": study.status,
                "results": [e.as_dict() for e in study.images.values()],
            }

    @app.post("/v1/studies/{study_id}/images", status_code=201)
    async def submit_image(study_id: str, request: Request) -> dict:
        body = await _json_body(request)
        b64 = body.get("image_png_base64")
        if not isinstance(b64, str) or not b64:
            raise ApiError("invalid_request", 422, "image_png_base64 is required")
        try:
            raw = base64.b64decode(b64, validate=True)
        except (binascii.Error, ValueError):
            raise ApiError("decode_error", 422, "image_png_base64 is not valid base64")
        metadata = body.get("metadata") or {}
        if not isinstance(metadata, dict):
            raise ApiError("invalid_request", 422, "metadata must be an object")

        with store.lock:
            study = _study(study_id)
            if study.status == "closed":
                raise ApiError("study_closed", 409, f"study {study_id} is closed")

            try:
                pixels = decode_image(raw)
            except InvalidImage as exc:
                raise ApiError("decode_error", 422, str(exc))

            image_id = str(metadata.get("image_id") or hashlib.sha256(raw).hexdigest())
            prior = study.images.get(image_id)
            if prior is not None:
                retaking = (
                    prior.status == STATUS_COMPLETE
                    and prior.result is not None
                    and prior.result.disposition is Disposition.RETAKE
                )
                if not retaking:
                    raise ApiError(
                        "duplicate_image", 409, f"image {image_id} already screened in this study"
                    )
            attempts = (prior.attempts if prior else 0) + 1

            try:
                std = preprocess(pixels, source_id=image_id)
            except NoFundusDetected as exc:
                raise ApiError("no_fundus_detected", 422, str(exc))
            provenance = std.provenance()

            try:
                mq = config.backend.classify(ModelId.MQ, image_id, std.pixels)
                anatomy = config.backend.detect_anatomy(image_id, std.pixels)
                verdict = quality_gate(mq, anatomy, config.policy)
                if verdict.passed:
                    result = run_screening(
                        image_id,
                        config.backend,
                        config.policy,
                        PresetMd(MdDecision.PROCEED_UNGRADABLE),
                        pixels=std.pixels,
                        retakes_used=attempts - 1,
                    )
                else:
                    result = None
            except BackendError as exc:
                raise ApiError("backend_error", 502, str(exc))

            if result is not None:
                result = _result_with_preprocess(result, provenance)
                store.record(
                    {
                        "t": "image_submitted",
                        "study_id": study_id,
                        "image_id": image_id,
                        "metadata": metadata,
                        "attempts": attempts,
                        "status": STATUS_COMPLETE,
                        "pending_reason": None,
                        "result": result.as_dict(),
                    }
                )
                return {
                    "study_id": study_id,
                    "image_id": image_id,
                    "status": STATUS_COMPLETE,
                    "result": result.as_dict(),
                }

            reason = ",".join(verdict.reasons)
            pixel_cache[(study_id, image_id)] = std.pixels
            store.record(
                {
                    "t": "image_submitted",
                    "study_id": study_id,
                    "image_id": image_id,
                    "metadata": metadata,
                    "attempts": attempts,
                    "status": STATUS_AWAITING_MD,
                    "pending_reason": reason,
                    "result": None,
                }
            )
            return {
                "study_id": study_id,
                "image_id": image_id,
                "status": STATUS_AWAITING_MD,
                "reason": reason,
                "stages": [
                    {"stage": PREPROCESS_STAGE, "output": provenance, "decision": "standardized"},
                    {
                        "stage": ModelId.MQ.value,
                        "output": {"label": mq.label, "score": mq.score},
                        "decision": "pass" if mq.score >= config.policy.quality_threshold else "low_quality",
                    },
                    {
                        "stage": ModelId.MA.value,
                        "output": {
                            "macula": {
                                "present": anatomy.macula.present,
                                "score": anatomy.macula.score,
                            },
                            "optic_nerve": {
                                "present": anatomy.optic_nerve.present,
                                "score": anatomy.optic_nerve.score,
                            },
                        },
                        "decision": reason or "pass",
                    },
                ],
            }

    @app.post("/v1/studies/{study_id}/images/{image_id}/md-decision")
    async def md_decision(study_id: str, image_id: str, request: Request) -> dict:
        body = await _json_body(request)
        decision_value = body.get("decision")
        try:
            decision = MdDecision(decision_value)
        except ValueError:
            raise ApiError(
                "invalid_request",
                422,
                "decision must be 'retake' or 'proceed_ungradable'",
            )
        with store.lock:
            study = _study(study_id)
            entry = study.images.get(image_id)
            if entry is None:
                raise ApiError("unknown_image", 404, f"no image {image_id} in study {study_id}")
            if entry.status != STATUS_AWAITING_MD:
                raise ApiError(
                    "no_pending_decision", 409, f"image {image_id} is not awaiting a decision"
                )
            pixels = pixel_cache.pop((study_id, image_id), None)
            try:
                result = run_screening(
                    image_id,
                    config.backend,
                    config.policy,
                    PresetMd(decision),
                    pixels=pixels,
                    retakes_used=entry.attempts - 1,
                )
            except BackendError as exc:
                raise ApiError("backend_error", 502, str(exc))
            store.record(
                {
                    "t": "md_decided",
                    "study_id": study_id,
                    "image_id": image_id,
                    "decision": decision.value,
                    "result": result.as_dict(),
                }
            )
            return {
                "study_id": study_id,
                "image_id": image_id,
                "status": STATUS_COMPLETE,
                "result": result.as_dict(),
            }

    @app.post("/v1/feedback", status_code=201)
    async def submit_feedback(request: Request) -> dict:
        body = await _json_body(request)
        study_id = body.get("study_id")
        image_id = body.get("image_id")
        reviewer = body.get("reviewer")
        if not all(isinstance(v, str) and v for v in (study_id, image_id, reviewer)):
            raise ApiError(
                "invalid_request", 422, "study_id, image_id and reviewer are required strings"
            )
        try:
            grade = Grade(body.get("grade"))
        except ValueError:
            raise ApiError("invalid_request", 422, "grade must be one of R0..R6")
        quality = body.get("quality")
        if quality is not None and not isinstance(quality, str):
            raise ApiError("invalid_request", 422, "quality must be a string when present")
        note = body.get("note") or ""
        if not isinstance(note, str):
            raise ApiError("invalid_request", 422, "note must be a string")

        with store.lock:
            study = _study(study_id)
            entry = study.images.get(image_id)
            if entry is None or entry.result is None:
                raise ApiError(
                    "unknown_image", 404, f"image {image_id} has no screening result to review"
                )
            feedback_id = uuid.uuid4().hex[:12]
            store.record(
                {
                    "t": "feedback",
                    "entry": {
                        "feedback_id": feedback_id,
                        "study_id": study_id,
                        "image_id": image_id,
                        "reviewer": reviewer,
                        "grade": grade.value,
                        "quality": quality,
                        "note": note,
                        "timestamp": time.time(),
                    },
                }
            )
            return {"feedback_id": feedback_id}

    @app.get("/v1/feedback")
    async def list_feedback(study_id: str | None = None, image_id: str | None = None) -> dict:
        with store.lock:
            entries = [
                e
                for e in store.feedback
                if (study_id is None or e["study_id"] == study_id)
                and (image_id is None or e["image_id"] == image_id)
            ]
            return {"feedback": entries}

    @app.get("/v1/reports/evaluation")
    async def evaluation_report(scenario: str | None = None) -> dict:
        if not scenario:
            raise ApiError("invalid_request", 422, "scenario query parameter is required")
        try:
            spec = resolve_scenario(scenario)
        except KeyError as exc:
            raise ApiError("unknown_scenario", 422, str(exc.args[0]))
        except ValueError as exc:
            raise ApiError("invalid_scenario", 422, str(exc))
        records, predictions = _dataset()
        try:
            result = evaluate_scenario(records, predictions, spec)
        except EmptyInput as exc:
            raise ApiError("empty_input", 422, str(exc))
        except (BackendError, CohortFormatError) as exc:
            raise ApiError("dataset_error", 500, str(exc))
        return result.as_dict()

    app.state.store = store
    app.state.config = config
    return app
