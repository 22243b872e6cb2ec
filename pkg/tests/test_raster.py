import struct

import numpy as np
import pytest
from PIL import Image

from cohclass import raster
from cohclass.errors import (
    DataError,
    DegenerateInputError,
    FormatError,
    TruncationError,
)


def test_decode_hand_encoded_scalar():
    # byte layout written out by hand: magic, u32 dims, two LE f32 values
    data = b"RAST" + struct.pack("<II", 2, 1) + struct.pack("<ff", 0.5, 1.0)
    arr = raster.decode_raster(data)
    assert arr.dtype == np.float32
    assert arr.shape == (1, 2)
    assert arr.tolist() == [[0.5, 1.0]]


def test_decode_hand_encoded_complex():
    data = b"IGRM" + struct.pack("<II", 1, 1) + struct.pack("<ff", 1.5, -2.0)
    arr = raster.decode_raster(data)
    assert arr.dtype == np.complex64
    assert arr[0, 0] == np.complex64(1.5 - 2.0j)


def test_encode_zero_complex_pixel():
    data = raster.encode_raster(np.zeros((1, 1), dtype=np.complex64))
    assert data == b"IGRM" + struct.pack("<II", 1, 1) + b"\x00" * 8


def test_roundtrip_bytes_identity():
    rng = np.random.default_rng(7)
    arr = (rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))).astype(
        np.complex64
    )
    data = raster.encode_raster(arr)
    assert raster.encode_raster(raster.decode_raster(data)) == data
    back = raster.decode_raster(data)
    assert back.dtype == np.complex64
    assert np.array_equal(back, arr)


def test_roundtrip_scalar():
    rng = np.random.default_rng(8)
    arr = rng.standard_normal((5, 9)).astype(np.float32)
    assert np.array_equal(raster.decode_raster(raster.encode_raster(arr)), arr)


def test_decode_bad_magic():
    data = b"XXXX" + struct.pack("<II", 1, 1) + b"\x00" * 4
    with pytest.raises(FormatError):
        raster.decode_raster(data)


def test_decode_truncated():
    good = raster.encode_raster(np.ones((4, 4), dtype=np.float32))
    with pytest.raises(TruncationError):
        raster.decode_raster(good[:-3])
    with pytest.raises(TruncationError):
        raster.decode_raster(good[:8])


def test_decode_non_finite_payload():
    data = b"RAST" + struct.pack("<II", 1, 1) + struct.pack("<f", np.nan)
    with pytest.raises(DataError):
        raster.decode_raster(data)


def test_encode_refuses_nan():
    arr = np.ones((2, 2), dtype=np.float32)
    arr[0, 0] = np.nan
    with pytest.raises(DataError):
        raster.encode_raster(arr)


def test_file_helpers(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = tmp_path / "a.rast"
    raster.write_raster(path, arr)
    assert np.array_equal(raster.read_raster(path), arr)


class TestSaturateAndNormalize:
    def test_hand_computed_outlier_case(self):
        # amplitudes [1, 2, 3, 100]: median 2.5, MAD 1.0,
        # score(100) = 0.6745 * 97.5 / 1.0 ~ 65.8 > 3.5, all others < 3.5
        z = np.array([[1.0, 2.0], [3.0, 100.0]], dtype=np.complex128)
        shifted, mask, ceiling = raster.saturate_and_normalize(z)
        assert mask.tolist() == [[False, False], [False, True]]
        assert ceiling == 3.0
        restored = raster.denormalize(shifted, ceiling)
        assert np.abs(restored[1, 1]) == pytest.approx(3.0, rel=1e-12)

    def test_zero_pixel_maps_to_shift(self):
        z = np.array([[0.0, 1.0 + 1.0j]], dtype=np.complex128)
        shifted, _, _ = raster.saturate_and_normalize(z)
        assert shifted[0, 0] == pytest.approx(1.0 + 1.0j)

    def test_ceiling_pixel_hits_channel_bounds(self):
        z = np.array([[1.0, 2.0, 3.0]], dtype=np.complex128)
        shifted, mask, ceiling = raster.saturate_and_normalize(z)
        assert not mask.any()
        assert ceiling == 3.0
        assert shifted[0, 2] == pytest.approx(2.0 + 1.0j)

    def test_channels_bounded_and_amplitude_clamped(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
        z[3, 3] *= 500.0
        shifted, mask, ceiling = raster.saturate_and_normalize(z)
        assert mask[3, 3]
        assert shifted.real.min() >= 0.0 and shifted.real.max() <= 2.0
        assert shifted.imag.min() >= 0.0 and shifted.imag.max() <= 2.0
        amp = np.abs(raster.denormalize(shifted, ceiling))
        assert amp.max() <= ceiling * (1 + 1e-12)

    def test_outlier_mask_scale_invariant(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal((15, 15)) + 1j * rng.standard_normal((15, 15))
        z[0, 0] *= 50.0
        _, mask1, _ = raster.saturate_and_normalize(z)
        _, mask2, _ = raster.saturate_and_normalize(z * 137.0)
        assert np.array_equal(mask1, mask2)

    def test_phase_preserved(self):
        rng = np.random.default_rng(9)
        z = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
        z[1, 1] *= 300.0
        shifted, _, ceiling = raster.saturate_and_normalize(z)
        restored = raster.denormalize(shifted, ceiling)
        dphi = np.angle(restored * np.conj(z))
        assert np.abs(dphi).max() < 1e-6

    def test_all_zero_raster_degenerate(self):
        with pytest.raises(DegenerateInputError):
            raster.saturate_and_normalize(np.zeros((4, 4), dtype=np.complex64))

    def test_rejects_non_finite(self):
        z = np.ones((2, 2), dtype=np.complex128)
        z[0, 0] = np.inf
        with pytest.raises(DataError):
            raster.saturate_and_normalize(z)


class TestPhasePng:
    def test_constant_phase_single_color(self, tmp_path):
        z = np.full((8, 8), np.exp(1j * 0.7), dtype=np.complex64)
        path = tmp_path / "p.png"
        raster.export_phase_png(z, path)
        img = np.asarray(Image.open(path))
        assert img.shape == (8, 8, 3)
        assert len(np.unique(img.reshape(-1, 3), axis=0)) == 1

    def test_phase_zero_is_ramp_midpoint(self, tmp_path):
        path = tmp_path / "m.png"
        raster.export_phase_png(np.ones((1, 1), dtype=np.complex64), path)
        pixel = np.asarray(Image.open(path))[0, 0]
        # midpoint of the blue-to-red hue ramp is green
        assert pixel.tolist() == [0, 255, 0]

    def test_extremes_are_blue_and_red(self, tmp_path):
        z = np.array([[np.exp(-1j * (np.pi - 1e-6)), np.exp(1j * np.pi)]]).astype(
            np.complex64
        )
        path = tmp_path / "e.png"
        raster.export_phase_png(z, path)
        img = np.asarray(Image.open(path))
        blue, red = img[0, 0], img[0, 1]
        assert blue[2] == 255 and blue[0] == 0  # -pi end
        assert red[0] == 255 and red[2] == 0  # +pi end

    def test_export_deterministic(self, tmp_path):
        rng = np.random.default_rng(3)
        z = (rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))).astype(
            np.complex64
        )
        p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
        raster.export_phase_png(z, p1)
        raster.export_phase_png(z, p2)
        assert p1.read_bytes() == p2.read_bytes()
