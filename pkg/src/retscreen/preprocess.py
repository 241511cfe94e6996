"""Background removal and geometric standardization of fundus photographs.

Detection is a classical threshold + connected-component filter: it boxes the
bright fundus disc and discards small bright specks (glints, burned-in
letters). Standardization crops to that box, pads the short side with black
to a square, and resamples to the fixed 512x512 model input so the fundus is
never stretched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

OUTPUT_SIDE = 512
MIN_INPUT_SIDE = 64


class NoFundusDetected(ValueError):
    """No usable foreground above the background threshold."""


class InvalidImage(ValueError):
    """Buffer does not satisfy the raw-image contract."""


@dataclass(frozen=True)
class PreprocessConfig:
    background_threshold: int = 10  # on the 0..255 intensity scale
    min_component_fraction: float = 0.005  # bright specks below this are discarded
    min_foreground_fraction: float = 0.01


@dataclass(frozen=True)
class FundusRegion:
    """Axis-aligned crop box, inclusive-exclusive pixel coordinates."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"degenerate region {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @classmethod
    def full_frame(cls, image: np.ndarray) -> "FundusRegion":
        h, w = image.shape[:2]
        return cls(0, 0, w, h)


@dataclass(frozen=True)
class StandardImage:
    """Fixed 512x512x3 buffer plus the provenance needed to audit the transform.

    `scale` is the single factor applied to both axes; `pad_*` are the black
    borders (in source pixels, pre-scaling) that squared the crop.
    """

    pixels: np.ndarray
    source_id: str
    scale: float
    pad_left: int
    pad_top: int
    pad_right: int
    pad_bottom: int

    def provenance(self) -> dict:
        return {
            "source_id": self.source_id,
            "scale": self.scale,
            "pad_left": self.pad_left,
            "pad_top": self.pad_top,
            "pad_right": self.pad_right,
            "pad_bottom": self.pad_bottom,
        }


def validate_raw(image: np.ndarray) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidImage(f"expected HxWx3 buffer, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise InvalidImage(f"expected 8-bit channels, got {image.dtype}")
    h, w = image.shape[:2]
    if h < MIN_INPUT_SIDE or w < MIN_INPUT_SIDE:
        raise InvalidImage(f"image {w}x{h} below minimum side {MIN_INPUT_SIDE}")
    return image


def detect_fundus_region(
    image: np.ndarray, config: PreprocessConfig = PreprocessConfig()
) -> FundusRegion:
    """Tightest box around the above-threshold foreground.

    Connected bright components smaller than `min_component_fraction` of the
    frame are discarded before boxing, so isolated glints and burned-in text
    do not stretch the crop.
    """
    validate_raw(image)
    h, w = image.shape[:2]
    mask = image.max(axis=2) > config.background_threshold
    if not mask.any():
        raise NoFundusDetected("no pixel above background threshold")

    labels, n_components = ndimage.label(mask)
    areas = np.bincount(labels.ravel())
    min_area = config.min_component_fraction * h * w
    keep = np.flatnonzero(areas >= min_area)
    keep = keep[keep != 0]  # label 0 is background
    if keep.size == 0 or areas[keep].sum() < config.min_foreground_fraction * h * w:
        raise NoFundusDetected("surviving foreground below minimum area")

    surviving = np.isin(labels, keep)
    ys, xs = np.nonzero(surviving)
    return FundusRegion(x0=int(xs.min()), y0=int(ys.min()), x1=int(xs.max()) + 1, y1=int(ys.max()) + 1)


def standardize(
    image: np.ndarray, region: FundusRegion, source_id: str = ""
) -> StandardImage:
    """Crop to the region, square by symmetric black padding, resample to 512.

    One scale factor serves both axes, so the fundus aspect ratio is
    preserved exactly; the resample is skipped when the padded crop is
    already 512x512, making that case (and re-standardizing an output)
    bit-exact.
    """
    validate_raw(image)
    h, w = image.shape[:2]
    if not (region.x1 <= w and region.y1 <= h):
        raise ValueError(f"region {region} outside image {w}x{h}")

    crop = image[region.y0 : region.y1, region.x0 : region.x1]
    ch, cw = crop.shape[:2]
    side = max(ch, cw)
    pad_x = side - cw
    pad_y = side - ch
    pad_left, pad_top = pad_x // 2, pad_y // 2
    pad_right, pad_bottom = pad_x - pad_left, pad_y - pad_top
    squared = np.pad(
        crop, ((pad_top, pad_bottom), (pad_left, pad_right), (0, 0)), mode="constant"
    )

    if side == OUTPUT_SIDE:
        pixels = squared.copy()
    else:
        resized = Image.fromarray(squared).resize((OUTPUT_SIDE, OUTPUT_SIDE), Image.BILINEAR)
        pixels = np.asarray(resized)
    return StandardImage(
        pixels=pixels,
        source_id=source_id,
        scale=OUTPUT_SIDE / side,
        pad_left=pad_left,
        pad_top=pad_top,
        pad_right=pad_right,
        pad_bottom=pad_bottom,
    )


def preprocess(
    image: np.ndarray, source_id: str = "", config: PreprocessConfig = PreprocessConfig()
) -> StandardImage:
    """Full pipeline: detect the fundus box, then standardize."""
    return standardize(image, detect_fundus_region(image, config), source_id)


def load_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit PNG/JPEG as an HxWx3 buffer."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def decode_image(data: bytes) -> np.ndarray:
    import io

    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise InvalidImage(f"undecodable image bytes: {exc}") from exc


def save_standard(std: StandardImage, path: str | Path) -> Path:
    """Write the standardized PNG plus a provenance sidecar next to it."""
    path = Path(path)
    Image.fromarray(std.pixels).save(path, format="PNG")
    sidecar = path.with_name(path.name + ".provenance.json")
    sidecar.write_text(json.dumps(std.provenance(), indent=2) + "\n")
    return path
