"""Shared test fixtures: synthetic fundus images and stub manifests."""

from __future__ import annotations

import base64
import io
import json

import numpy as np
import pytest
from PIL import Image

from retscreen.backends import StubBackend, load_manifest


def make_disc(
    height: int = 128,
    width: int = 128,
    cx: int | None = None,
    cy: int | None = None,
    radius: int | None = None,
    color: tuple[int, int, int] = (140, 70, 30),
) -> np.ndarray:
    """Black frame with a filled circular fundus-like disc."""
    cx = width // 2 if cx is None else cx
    cy = height // 2 if cy is None else cy
    radius = min(height, width) // 3 if radius is None else radius
    pixels = np.zeros((height, width, 3), dtype=np.uint8)
    yy, xx = np.mgrid[0:height, 0:width]
    pixels[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2] = color
    return pixels


def png_bytes(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return buf.getvalue()


def png_base64(pixels: np.ndarray) -> str:
    return base64.b64encode(png_bytes(pixels)).decode("ascii")


def classifier_row(image_id: str, model: str, label: int) -> dict:
    return {
        "image_id": image_id,
        "model": model,
        "output": {"label": label, "score": 0.9 if label else 0.1},
    }


def anatomy_row(image_id: str, macula: bool = True, optic_nerve: bool = True) -> dict:
    def det(present: bool) -> dict:
        return {"present": present, "score": 0.9 if present else 0.1}

    return {
        "image_id": image_id,
        "model": "MA",
        "output": {"macula": det(macula), "optic_nerve": det(optic_nerve)},
    }


def stub_rows(
    image_id: str,
    mq: int = 1,
    macula: bool = True,
    optic_nerve: bool = True,
    m1: int = 0,
    m2: int = 0,
    m3: int = 0,
) -> list[dict]:
    """Full five-model manifest rows for one image."""
    return [
        classifier_row(image_id, "MQ", mq),
        anatomy_row(image_id, macula, optic_nerve),
        classifier_row(image_id, "M1", m1),
        classifier_row(image_id, "M2", m2),
        classifier_row(image_id, "M3", m3),
    ]


def stub_from_rows(rows: list[dict], tmp_path) -> StubBackend:
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(rows))
    return StubBackend(load_manifest(path))


@pytest.fixture
def disc_image() -> np.ndarray:
    return make_disc()
