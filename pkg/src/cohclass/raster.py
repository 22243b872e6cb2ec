"""Raster types, bit-exact file I/O and amplitude preprocessing.

Rasters are plain 2D numpy arrays: complex64/complex128 for interferograms,
float32/float64 for scalar maps, bool for masks. Files use a fixed little
endian layout so that decode(encode(r)) is bit-exact for float32 data:

    magic (4 bytes)  "IGRM" complex | "RAST" scalar
    width  (u32 LE)
    height (u32 LE)
    payload: row-major f32 LE; complex samples interleaved (re, im)
"""

import struct

import numpy as np
from PIL import Image

from .errors import DataError, DegenerateInputError, FormatError, TruncationError

MAGIC_COMPLEX = b"IGRM"
MAGIC_SCALAR = b"RAST"
_HEADER = struct.Struct("<4sII")

# Outlier detection on amplitudes: modified z-score with the 3.5 cutoff,
# falling back to the mean absolute deviation when the MAD collapses to 0.
MODIFIED_ZSCORE_CUTOFF = 3.5
_MAD_SCALE = 0.6745
_MEAN_AD_SCALE = 0.7979

# Channel shift applied after normalization so ReLU networks see
# non-negative inputs: both channels land in [0, 2].
CHANNEL_SHIFT = 1.0 + 1.0j


def decode_raster(data: bytes) -> np.ndarray:
    """Decode "IGRM"/"RAST" bytes into a complex64 or float32 2D array."""
    if len(data) < _HEADER.size:
        raise TruncationError("file shorter than the 12-byte header")
    magic, width, height = _HEADER.unpack_from(data)
    if magic not in (MAGIC_COMPLEX, MAGIC_SCALAR):
        raise FormatError(f"unknown magic {magic!r}")
    if width == 0 or height == 0:
        raise FormatError(f"empty raster dimensions {width}x{height}")
    values_per_pixel = 2 if magic == MAGIC_COMPLEX else 1
    expected = width * height * values_per_pixel * 4
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise TruncationError(
            f"payload is {len(payload)} bytes, expected {expected} "
            f"for {width}x{height}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    if not np.isfinite(flat).all():
        raise DataError("payload contains non-finite samples")
    if magic == MAGIC_COMPLEX:
        out = flat.astype(np.float32).view(np.complex64).reshape(height, width)
    else:
        out = flat.astype(np.float32).reshape(height, width)
    return out.copy()


def encode_raster(raster) -> bytes:
    """Encode a 2D array as "IGRM" (complex dtype) or "RAST" (real) bytes.

    Data is stored as float32; inputs already in float32/complex64 round
    trip bit-exactly.
    """
    arr = np.asarray(raster)
    if arr.ndim != 2 or arr.size == 0:
        raise FormatError(f"expected a non-empty 2D raster, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("refusing to encode non-finite samples")
    height, width = arr.shape
    if np.iscomplexobj(arr):
        magic = MAGIC_COMPLEX
        payload = arr.astype(np.complex64).view(np.float32)
    else:
        magic = MAGIC_SCALAR
        payload = arr.astype(np.float32)
    header = _HEADER.pack(magic, width, height)
    return header + payload.astype("<f4").tobytes()


def read_raster(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_raster(fh.read())


def write_raster(path, raster) -> None:
    data = encode_raster(raster)
    with open(path, "wb") as fh:
        fh.write(data)


def _outlier_mask(amplitude: np.ndarray) -> np.ndarray:
    """Flag unusually HIGH amplitudes by modified z-score > 3.5.

    Low amplitudes are never flagged; only spikes degrade training.
    """
    med = np.median(amplitude)
    mad = np.median(np.abs(amplitude - med))
    if mad > 0:
        score = _MAD_SCALE * (amplitude - med) / mad
    else:
        mean_ad = np.mean(np.abs(amplitude - med))
        if mean_ad == 0:
            return np.zeros(amplitude.shape, dtype=bool)
        score = _MEAN_AD_SCALE * (amplitude - med) / mean_ad
    return score > MODIFIED_ZSCORE_CUTOFF


def saturate_and_normalize(z):
    """Clamp outlier amplitudes, scale channels into [-1, 1], shift by +1.

    Returns (shifted, mask, ceiling):
      shifted  complex array with real/imag channels in [0, 2]
      mask     bool array of pixels whose amplitude was clamped
      ceiling  the amplitude every channel was divided by (max inlier
               amplitude); reuse it to undo the normalization

    Phase is preserved exactly: clamping rescales each flagged sample by a
    positive real factor. Raises DegenerateInputError for all-zero input.
    """
    z = np.asarray(z)
    if z.ndim != 2 or z.size == 0:
        raise DataError(f"expected a non-empty 2D interferogram, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise DataError("interferogram contains non-finite samples")
    amp = np.abs(z).astype(np.float64)
    if not amp.any():
        raise DegenerateInputError("all-zero interferogram: amplitude ceiling would be 0")

    mask = _outlier_mask(amp)
    inliers = amp[~mask]
    ceiling = float(inliers.max()) if inliers.size else 0.0
    if ceiling == 0.0:
        # Every nonzero pixel got flagged; without inlier signal there is
        # nothing to clamp to, so keep all pixels instead.
        mask = np.zeros_like(mask)
        ceiling = float(amp.max())

    out = z.astype(np.complex128)
    clamp = mask & (amp > ceiling)
    if clamp.any():
        out = out.copy()
        out[clamp] *= ceiling / amp[clamp]
    shifted = out / ceiling + CHANNEL_SHIFT
    return shifted, mask, ceiling


def denormalize(shifted, ceiling: float):
    """Invert saturate_and_normalize's scaling and +1 shift."""
    return (np.asarray(shifted) - CHANNEL_SHIFT) * ceiling


def _phase_ramp_rgb(phase: np.ndarray) -> np.ndarray:
    """Map phase in (-pi, pi] onto a blue-to-red hue ramp (u8 RGB)."""
    t = (phase + np.pi) / (2.0 * np.pi)  # 0 = blue end, 1 = red end
    hue = (1.0 - np.clip(t, 0.0, 1.0)) * (240.0 / 360.0)
    h6 = hue * 6.0
    sector = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    one = np.ones_like(f)
    q = 1.0 - f
    # value = saturation = 1
    r = np.choose(sector, [one, q, 0 * f, 0 * f, f, one])
    g = np.choose(sector, [f, one, one, q, 0 * f, 0 * f])
    b = np.choose(sector, [0 * f, 0 * f, f, one, one, q])
    rgb = np.stack([r, g, b], axis=-1)
    return np.round(rgb * 255.0).astype(np.uint8)


def export_phase_png(z, path) -> None:
    """Write the wrapped phase of a complex raster as an 8-bit PNG.

    The ramp runs blue at -pi to red at +pi; output bytes are deterministic
    for identical input.
    """
    z = np.asarray(z)
    if z.ndim != 2 or z.size == 0:
        raise DataError(f"expected a non-empty 2D raster, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise DataError("raster contains non-finite samples")
    rgb = _phase_ramp_rgb(np.angle(z))
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
