"""Uniform interface to the five decision models behind the screening flow.

Two implementations: a deterministic manifest-driven stub (lookup table keyed
by image id, for replay and testing) and an HTTP client speaking a one-call-
per-image JSON protocol, so a real model server in any ecosystem can be
plugged in. Thresholding happens in exactly one place: a backend reply that
carries only a score gets its label derived here from the configured
per-model threshold, and a reply carrying both must agree with that rule.
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

DEFAULT_THRESHOLD = 0.5


class ModelId(Enum):
    MQ = "MQ"  # image quality
    MA = "MA"  # macula / optic-nerve detection
    M1 = "M1"  # referral
    M2 = "M2"  # low-grade split {R0,R1} vs {R2}
    M3 = "M3"  # high-grade split {R3} vs {R4}


CLASSIFIER_MODELS = (ModelId.MQ, ModelId.M1, ModelId.M2, ModelId.M3)


class BackendError(Exception):
    pass


class MissingPrediction(BackendError):
    """The backend holds no output for this (image, model)."""


class BackendUnavailable(BackendError):
    """External backend unreachable or not serving."""


class InvalidOutput(BackendError):
    """Backend reply violates the output contract."""


class ManifestParseError(ValueError):
    pass


class DuplicateKey(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdConfig:
    """Per-model decision thresholds; every one is externally settable."""

    per_model: dict[ModelId, float] = field(default_factory=dict)
    detection: float = DEFAULT_THRESHOLD  # anatomy presence cutoff

    def threshold(self, model: ModelId) -> float:
        return self.per_model.get(model, DEFAULT_THRESHOLD)


@dataclass(frozen=True)
class ClassifierOutput:
    label: int
    score: float  # confidence for label 1

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class Detection:
    present: bool
    score: float
    box: tuple[int, int, int, int] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class AnatomyOutput:
    macula: Detection
    optic_nerve: Detection


class Backend(Protocol):
    """Shared surface of the stub and HTTP backends."""

    def classify(
        self, model: ModelId, image_id: str, pixels: np.ndarray | None = None
    ) -> ClassifierOutput: ...

    def detect_anatomy(
        self, image_id: str, pixels: np.ndarray | None = None
    ) -> AnatomyOutput: ...


def _check_classifier(out: ClassifierOutput, threshold: float, context: str) -> ClassifierOutput:
    expected = 1 if out.score >= threshold else 0
    if out.label != expected:
        raise InvalidOutput(
            f"{context}: label {out.label} disagrees with score {out.score} at threshold {threshold}"
        )
    return out

def _check_anatomy(out: AnatomyOutput, threshold: float, context: str) -> AnatomyOutput:
    for name, det in (("macula", out.macula), ("optic_nerve", out.optic_nerve)):
        if det.present and det.score < threshold:
            raise InvalidOutput(
                f"{context}: {name} flagged present with score {det.score} below {threshold}"
            )
    return out


def _parse_classifier(obj: dict, threshold: float, context: str) -> ClassifierOutput:
    if "score" not in obj:
        raise InvalidOutput(f"{context}: classifier output lacks a score")
    score = obj["score"]
    if not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
        raise InvalidOutput(f"{context}: score {score!r} outside [0, 1]")
    score = float(score)
    label = obj.get("label")
    if label is None:
        label = 1 if score >= threshold else 0
    if label not in (0, 1):
        raise InvalidOutput(f"{context}: label {label!r} not binary")
    return _check_classifier(ClassifierOutput(label=int(label), score=score), threshold, context)


def _parse_detection(obj: dict, context: str) -> Detection:
    if not isinstance(obj, dict) or "present" not in obj or "score" not in obj:
        raise InvalidOutput(f"{context}: detection needs 'present' and 'score'")
    score = obj["score"]
    if not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
        raise InvalidOutput(f"{context}: score {score!r} outside [0, 1]")
    box = tuple(obj["box"]) if obj.get("box") is not None else None
    return Detection(present=bool(obj["present"]), score=float(score), box=box)


def _parse_anatomy(obj: dict, threshold: float, context: str) -> AnatomyOutput:
    if "macula" not in obj or "optic_nerve" not in obj:
        raise InvalidOutput(f"{context}: anatomy output needs 'macula' and 'optic_nerve'")
    out = AnatomyOutput(
        macula=_parse_detection(obj["macula"], context),
        optic_nerve=_parse_detection(obj["optic_nerve"], context),
    )
    return _check_anatomy(out, threshold, context)


@dataclass(frozen=True)
class BackendManifest:
    """Validated map from (image_id, model) to a model output."""

    entries: dict[tuple[str, ModelId], ClassifierOutput | AnatomyOutput]

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, image_id: str, model: ModelId):
        return self.entries.get((image_id, model))


def load_manifest(
    path: str | Path, thresholds: ThresholdConfig = ThresholdConfig()
) -> BackendManifest:
    """Parse and validate a manifest file.

    Format: JSON array of {"image_id", "model", "output"} records. Classifier
    outputs need a score (label optional, derived/verified against the model
    threshold); MA outputs carry macula and optic_nerve detections.
    """
    text = Path(path).read_text()
    if not text.strip():
        return BackendManifest(entries={})
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{path}: {exc}") from exc
    if not isinstance(records, list):
        raise ManifestParseError(f"{path}: expected a JSON array of records")

    entries: dict[tuple[str, ModelId], ClassifierOutput | AnatomyOutput] = {}
    for i, rec in enumerate(records):
        context = f"{path}[{i}]"
        if not isinstance(rec, dict) or not {"image_id", "model", "output"} <= rec.keys():
            raise ManifestParseError(f"{context}: record needs image_id, model, output")
        try:
            model = ModelId(rec["model"])
        except ValueError as exc:
            raise ManifestParseError(f"{context}: unknown model {rec['model']!r}") from exc
        key = (str(rec["image_id"]), model)
        if key in entries:
            raise DuplicateKey(f"{context}: duplicate entry for {key}")
        if model is ModelId.MA:
            entries[key] = _parse_anatomy(rec["output"], thresholds.detection, context)
        else:
            entries[key] = _parse_classifier(rec["output"], thresholds.threshold(model), context)
    return BackendManifest(entries=entries)


def save_manifest(manifest_rows: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest_rows, indent=2) + "\n")


class StubBackend:
    """Deterministic lookup backend; immutable after construction."""

    def __init__(self, manifest: BackendManifest, thresholds: ThresholdConfig = ThresholdConfig()):
        self.manifest = manifest
        self.thresholds = thresholds

    @classmethod
    def from_file(cls, path: str | Path, thresholds: ThresholdConfig = ThresholdConfig()):
        return cls(load_manifest(path, thresholds), thresholds)

    def classify(
        self, model: ModelId, image_id: str, pixels: np.ndarray | None = None
    ) -> ClassifierOutput:
        if model not in CLASSIFIER_MODELS:
            raise ValueError(f"{model} is not a classifier model")
        out = self.manifest.get(image_id, model)
        if out is None:
            raise MissingPrediction(f"no stub entry for ({image_id}, {model.value})")
        return out

    def detect_anatomy(self, image_id: str, pixels: np.ndarray | None = None) -> AnatomyOutput:
        out = self.manifest.get(image_id, ModelId.MA)
        if out is None:
            raise MissingPrediction(f"no stub entry for ({image_id}, MA)")
        return out


class HttpBackend:
    """Client for an external model server.

    Wire protocol: POST {base}/v1/infer with
    {"model": "M1", "image_id": "...", "image_png_base64": "..."}; the reply
    is {"label": 0|1, "score": f} for classifiers or
    {"macula": {"present": b, "score": f}, "optic_nerve": {...}} for MA.
    Safe for concurrent use: one independent request per call.
    """

    def __init__(
        self,
        base_url: str,
        thresholds: ThresholdConfig = ThresholdConfig(),
        timeout: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.thresholds = thresholds
        self.timeout = timeout

    def _request(self, model: ModelId, image_id: str, pixels: np.ndarray | None) -> dict:
        import requests

        if pixels is not None:
            from PIL import Image

            buf = io.BytesIO()
            Image.fromarray(pixels).save(buf, format="PNG")
            png_b64 = base64.b64encode(buf.getvalue()).decode("ascii")
        else:
            png_b64 = ""
        body = {"model": model.value, "image_id": image_id, "image_png_base64": png_b64}
        try:
            reply = requests.post(f"{self.base_url}/v1/infer", json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.base_url}: {exc}") from exc
        if reply.status_code != 200:
            raise BackendUnavailable(f"{self.base_url}: HTTP {reply.status_code}")
        try:
            payload = reply.json()
        except ValueError as exc:
            raise InvalidOutput(f"{self.base_url}: non-JSON reply") from exc
        if not isinstance(payload, dict):
            raise InvalidOutput(f"{self.base_url}: reply is not an object")
        return payload

    def classify(
        self, model: ModelId, image_id: str, pixels: np.ndarray | None = None
    ) -> ClassifierOutput:
        if model not in CLASSIFIER_MODELS:
            raise ValueError(f"{model} is not a classifier model")
        payload = self._request(model, image_id, pixels)
        try:
            return _parse_classifier(payload, self.thresholds.threshold(model), f"{model.value}/{image_id}")
        except ValueError as exc:
            raise InvalidOutput(str(exc)) from exc

    def detect_anatomy(self, image_id: str, pixels: np.ndarray | None = None) -> AnatomyOutput:
        payload = self._request(ModelId.MA, image_id, pixels)
        try:
            return _parse_anatomy(payload, self.thresholds.detection, f"MA/{image_id}")
        except ValueError as exc:
            raise InvalidOutput(str(exc)) from exc
