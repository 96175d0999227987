import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import kstest

from mmdsculpt.data import (
    FactorTable,
    FormatError,
    decode_latent_dump,
    encode_idx,
    encode_latent_dump,
    generate_xy_family,
    load_idx,
    parse_idx,
    read_latent_dump,
    render_shapes,
    shape_radius,
    write_idx,
    write_latent_dump,
)


def _rng(seed=0):
    return np.random.default_rng(seed)


# ------------------------------------------------------------------ XY family

def test_centered_circle_is_mirror_symmetric():
    img = render_shapes(16.0, 16.0, 1.0, 0.0, 32)[0]
    np.testing.assert_array_equal(img, img[:, ::-1])
    np.testing.assert_array_equal(img, img[::-1, :])


@pytest.mark.parametrize("intensity", [1.0, 0.25])
def test_max_pixel_equals_intensity(intensity):
    img = render_shapes(10.3, 20.7, intensity, 0.0, 32)[0]
    assert img.max() == intensity


def test_square_variant_covers_more_than_circle():
    circle = render_shapes(16.0, 16.0, 1.0, 0.0, 32)[0].sum()
    square = render_shapes(16.0, 16.0, 1.0, 1.0, 32)[0].sum()
    r = shape_radius(32)
    assert square == pytest.approx(4 * r * r, rel=0.05)
    assert circle == pytest.approx(np.pi * r * r, rel=0.05)


@pytest.mark.parametrize("variant,k", [("XY", 2), ("XYC", 3), ("XYCS", 4)])
def test_factor_counts_and_ranges(variant, k):
    images, factors = generate_xy_family(variant, 200, 32, _rng())
    assert images.shape == (200, 32, 32)
    assert factors.values.shape == (200, k) and len(factors.names) == k
    assert factors.values.min() >= 0 and factors.values.max() <= 1
    assert images.min() >= 0 and images.max() <= 1


def test_generator_is_seed_deterministic():
    a_img, a_f = generate_xy_family("XYCS", 100, 32, _rng(5))
    b_img, b_f = generate_xy_family("XYCS", 100, 32, _rng(5))
    assert np.array_equal(a_img, b_img) and np.array_equal(a_f.values, b_f.values)


def test_center_factors_uniform():
    _, factors = generate_xy_family("XY", 10_000, 32, _rng(1))
    for j in range(2):
        assert kstest(factors.values[:, j], "uniform").statistic <= 0.05


def test_every_image_has_ink():
    images, _ = generate_xy_family("XYC", 2000, 16, _rng(2))
    assert np.all(images.reshape(2000, -1).max(axis=1) > 0)


def test_generator_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_xy_family("XYZ", 10)
    with pytest.raises(ValueError):
        generate_xy_family("XY", 10, resolution=8)


def test_factor_csv_round_trip(tmp_path):
    _, factors = generate_xy_family("XYC", 20, 32, _rng(3))
    factors.to_csv(tmp_path / "f.csv")
    back = FactorTable.from_csv(tmp_path / "f.csv")
    assert back.names == factors.names
    assert np.array_equal(back.values, factors.values)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == ",".join(factors.names)


# ------------------------------------------------------------------------ IDX

def test_idx_hand_example():
    buf = bytes([0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 128, 64])
    img = parse_idx(buf)
    assert img.shape == (1, 2, 2)
    np.testing.assert_array_equal(img[0], [[0.0, 1.0], [128 / 255, 64 / 255]])


def test_idx_wrong_magic_named():
    buf = bytes([0, 0, 8, 1, 0, 0, 0, 1])
    with pytest.raises(FormatError, match="00 00 08 01"):
        parse_idx(buf)


@pytest.mark.parametrize("cut", [2, 10, 17])
def test_idx_truncation_reports_offset(cut):
    buf = encode_idx(np.ones((1, 2, 2)))[:cut]
    with pytest.raises(FormatError, match=f"offset {cut}"):
        parse_idx(buf)


def test_idx_trailing_bytes_rejected():
    with pytest.raises(FormatError, match="trailing"):
        parse_idx(encode_idx(np.zeros((1, 2, 2))) + b"\x00")


@settings(max_examples=50, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(0, 4), st.integers(1, 5), st.integers(1, 5))))
def test_idx_round_trip(raw):
    images = raw / 255.0
    buf = encode_idx(images)
    assert buf[:4] == b"\x00\x00\x08\x03"
    assert struct.unpack(">III", buf[4:16]) == raw.shape
    np.testing.assert_array_equal(parse_idx(buf), images)
    assert encode_idx(parse_idx(buf)) == buf


def test_idx_file_round_trip_with_limit(tmp_path):
    images, _ = generate_xy_family("XY", 5, 16, _rng(4))
    images = np.rint(images * 255) / 255
    write_idx(tmp_path / "x.idx", images)
    np.testing.assert_array_equal(load_idx(tmp_path / "x.idx"), images)
    assert load_idx(tmp_path / "x.idx", limit=2).shape == (2, 16, 16)


# ---------------------------------------------------------------- latent dump

def test_empty_dump_is_sixteen_bytes(tmp_path):
    write_latent_dump(tmp_path / "e.ltnt", np.zeros((0, 3)))
    assert (tmp_path / "e.ltnt").stat().st_size == 16
    z = read_latent_dump(tmp_path / "e.ltnt")
    assert z.shape == (0, 3)


def test_dump_round_trip_within_float32_rounding(tmp_path):
    z = _rng(6).normal(size=(7, 4)) * 100
    write_latent_dump(tmp_path / "z.ltnt", z)
    back = read_latent_dump(tmp_path / "z.ltnt")
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, z.astype(np.float32))
    assert np.all(np.abs(back - z) <= np.abs(z) * 2.0**-24)


def test_dump_layout():
    buf = encode_latent_dump(np.array([[1.0, -2.0]]))
    assert buf[:4] == b"LTNT"
    assert struct.unpack("<III", buf[4:16]) == (1, 1, 2)
    assert struct.unpack("<2f", buf[16:]) == (1.0, -2.0)


def test_dump_truncation_error():
    buf = struct.pack("<4sIII", b"LTNT", 1, 2, 2) + struct.pack("<3f", 1, 2, 3)
    with pytest.raises(FormatError, match="truncated.*offset 28"):
        decode_latent_dump(buf)


@pytest.mark.parametrize("buf,pattern", [
    (b"LTN", "offset 3"),
    (struct.pack("<4sIII", b"NOPE", 1, 0, 0), "magic"),
    (struct.pack("<4sIII", b"LTNT", 2, 0, 0), "version 2"),
    (struct.pack("<4sIII", b"LTNT", 1, 1, 1) + b"\x00" * 8, "trailing"),
])
def test_dump_malformed_headers(buf, pattern):
    with pytest.raises(FormatError, match=pattern):
        decode_latent_dump(buf)


def test_dump_rejects_non_finite():
    with pytest.raises(ValueError):
        encode_latent_dump(np.array([[np.nan]]))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(0, 6), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_dump_round_trip_is_exact_for_float32(z):
    np.testing.assert_array_equal(decode_latent_dump(encode_latent_dump(z)), z)
