"""Geometry properties of fundus detection and standardization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_disc, png_bytes
from retscreen.preprocess import (
    OUTPUT_SIDE,
    FundusRegion,
    InvalidImage,
    NoFundusDetected,
    decode_image,
    detect_fundus_region,
    preprocess,
    save_standard,
    standardize,
    validate_raw,
)


def test_validate_raw_shape_rules():
    with pytest.raises(InvalidImage):
        validate_raw(np.zeros((100, 100), dtype=np.uint8))
    with pytest.raises(InvalidImage):
        validate_raw(np.zeros((100, 100, 4), dtype=np.uint8))
    with pytest.raises(InvalidImage):
        validate_raw(np.zeros((10, 100, 3), dtype=np.uint8))
    with pytest.raises(InvalidImage):
        validate_raw(np.zeros((100, 100, 3), dtype=np.float32))
    validate_raw(np.zeros((64, 64, 3), dtype=np.uint8))


def test_blank_image_has_no_fundus():
    with pytest.raises(NoFundusDetected):
        detect_fundus_region(np.zeros((128, 128, 3), dtype=np.uint8))


def test_tiny_specks_are_not_a_fundus():
    image = np.zeros((128, 128, 3), dtype=np.uint8)
    image[5, 5] = 255
    image[90, 17] = 255
    with pytest.raises(NoFundusDetected):
        detect_fundus_region(image)


def test_detect_finds_tight_box():
    image = make_disc(128, 128, cx=64, cy=64, radius=30)
    region = detect_fundus_region(image)
    assert (region.x0, region.y0, region.x1, region.y1) == (34, 34, 95, 95)


def test_speck_does_not_stretch_box():
    image = make_disc(200, 200, cx=100, cy=100, radius=40)
    image[3, 3] = 255  # one-pixel glint far from the disc
    with_speck = detect_fundus_region(image)
    clean = detect_fundus_region(make_disc(200, 200, cx=100, cy=100, radius=40))
    assert with_speck == clean


disc_params = st.tuples(
    st.integers(100, 300),  # height
    st.integers(100, 300),  # width
    st.integers(30, 45),  # radius
    st.integers(0, 1000),  # center jitter seed
)


@settings(max_examples=60, deadline=None)
@given(disc_params)
def test_translation_equivariance(params):
    h, w, radius, seed = params
    rng = np.random.default_rng(seed)
    margin = radius + 2
    cx = int(rng.integers(margin, w - margin))
    cy = int(rng.integers(margin, h - margin))
    base = detect_fundus_region(make_disc(h, w, cx=cx, cy=cy, radius=radius))

    dx = int(rng.integers(-(cx - margin), w - margin - cx + 1))
    dy = int(rng.integers(-(cy - margin), h - margin - cy + 1))
    moved = detect_fundus_region(make_disc(h, w, cx=cx + dx, cy=cy + dy, radius=radius))
    assert (moved.x0, moved.y0) == (base.x0 + dx, base.y0 + dy)
    assert (moved.x1, moved.y1) == (base.x1 + dx, base.y1 + dy)


@settings(max_examples=60, deadline=None)
@given(disc_params)
def test_output_is_always_512_cube(params):
    h, w, radius, seed = params
    rng = np.random.default_rng(seed)
    cx = int(rng.integers(radius + 2, w - radius - 2))
    cy = int(rng.integers(radius + 2, h - radius - 2))
    std = preprocess(make_disc(h, w, cx=cx, cy=cy, radius=radius), source_id="t")
    assert std.pixels.shape == (OUTPUT_SIDE, OUTPUT_SIDE, 3)
    assert std.pixels.dtype == np.uint8


@settings(max_examples=60, deadline=None)
@given(disc_params)
def test_aspect_preservation_within_one_pixel(params):
    h, w, radius, seed = params
    rng = np.random.default_rng(seed)
    cx = int(rng.integers(radius + 2, w - radius - 2))
    cy = int(rng.integers(radius + 2, h - radius - 2))
    image = make_disc(h, w, cx=cx, cy=cy, radius=radius)
    region = detect_fundus_region(image)
    std = standardize(image, region)
    # non-padding extent of the output, derived from the recorded geometry
    out_w = OUTPUT_SIDE - round((std.pad_left + std.pad_right) * std.scale)
    out_h = OUTPUT_SIDE - round((std.pad_top + std.pad_bottom) * std.scale)
    assert abs(out_w / out_h - region.width / region.height) <= 1.5 / min(out_w, out_h)
    assert abs(round(region.width * std.scale) - out_w) <= 1
    assert abs(round(region.height * std.scale) - out_h) <= 1


def test_idempotence_on_own_output():
    std = preprocess(make_disc(300, 260, cx=130, cy=150, radius=60), source_id="t")
    again = standardize(std.pixels, FundusRegion(0, 0, OUTPUT_SIDE, OUTPUT_SIDE))
    assert again.scale == 1.0
    assert (again.pad_left, again.pad_top, again.pad_right, again.pad_bottom) == (0, 0, 0, 0)
    assert np.array_equal(again.pixels, std.pixels)


def test_padding_is_symmetric_and_black():
    # wide bright band: the square crop needs vertical padding only
    image = np.zeros((120, 400, 3), dtype=np.uint8)
    image[40:80, 20:380] = (130, 70, 40)
    region = detect_fundus_region(image)
    assert (region.width, region.height) == (360, 40)
    std = standardize(image, region)
    assert std.pad_left == std.pad_right == 0
    assert std.pad_top + std.pad_bottom == 320
    assert abs(std.pad_top - std.pad_bottom) <= 1
    top_rows = std.pixels[: int(std.pad_top * std.scale) - 2]
    bottom_rows = std.pixels[OUTPUT_SIDE - int(std.pad_bottom * std.scale) + 2 :]
    assert top_rows.max() == 0
    assert bottom_rows.max() == 0


def test_region_outside_image_rejected():
    image = make_disc(128, 128)
    with pytest.raises(ValueError):
        standardize(image, FundusRegion(0, 0, 200, 200))


def test_provenance_and_sidecar(tmp_path):
    std = preprocess(make_disc(256, 256), source_id="img-1")
    prov = std.provenance()
    assert prov["source_id"] == "img-1"
    assert prov["scale"] == std.scale

    path = save_standard(std, tmp_path / "out.png")
    assert path == tmp_path / "out.png"
    sidecar = tmp_path / "out.png.provenance.json"
    assert sidecar.exists()
    import json

    assert json.loads(sidecar.read_text()) == prov
    decoded = decode_image(path.read_bytes())
    assert np.array_equal(decoded, std.pixels)


def test_decode_image_rejects_garbage():
    with pytest.raises(InvalidImage):
        decode_image(b"not a png")


def test_decode_image_round_trip(disc_image):
    assert np.array_equal(decode_image(png_bytes(disc_image)), disc_image)
