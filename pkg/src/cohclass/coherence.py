"""Windowed sample coherence between two complex rasters.

The magnitude of the normalized cross-correlation over a square window:

    |gamma| = |sum u1 * conj(u2)| / sqrt(sum |u1|^2 * sum |u2|^2)

Window sums are direct (a ones-kernel correlation, fixed summation order)
with edge-replicated borders, so output maps keep the input size.
"""

import numpy as np
from scipy import ndimage

from .errors import ParameterError, ShapeError

# Window used when correlating an interferogram with its filtered version;
# large enough to keep estimator bias small.
RAW_COHERENCE_WINDOW = 7


def _check_window(window: int, shape) -> None:
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be odd and >= 1, got {window}")
    if window > min(shape):
        raise ParameterError(f"window {window} exceeds raster dimensions {shape}")


def _window_sum(arr: np.ndarray, window: int) -> np.ndarray:
    kernel = np.ones((window, window), dtype=arr.dtype)
    return ndimage.correlate(arr, kernel, mode="nearest")


def boxcar_mean(raster, window: int) -> np.ndarray:
    """Moving average over a window x window neighborhood.

    Borders replicate the nearest edge pixel, so the output has the same
    shape as the input.
    """
    arr = np.asarray(raster, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"expected a non-empty 2D raster, got shape {arr.shape}")
    _check_window(window, arr.shape)
    return _window_sum(arr, window) / float(window * window)


def estimate_coherence(u1, u2, window: int) -> np.ndarray:
    """Per-pixel coherence magnitude of two equally sized complex rasters.

    Windows whose energy is zero in either raster yield coherence 0 rather
    than NaN; downstream thresholding treats missing signal as incoherent.
    Every output value lies in [0, 1].
    """
    a = np.asarray(u1, dtype=np.complex128)
    b = np.asarray(u2, dtype=np.complex128)
    if a.ndim != 2 or a.size == 0:
        raise ShapeError(f"expected a non-empty 2D raster, got shape {a.shape}")
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    _check_window(window, a.shape)

    cross = a * np.conj(b)
    num_re = _window_sum(cross.real, window)
    num_im = _window_sum(cross.imag, window)
    p1 = np.maximum(_window_sum(np.abs(a) ** 2, window), 0.0)
    p2 = np.maximum(_window_sum(np.abs(b) ** 2, window), 0.0)

    den = np.sqrt(p1 * p2)
    mag = np.hypot(num_re, num_im)
    coh = np.zeros(a.shape, dtype=np.float64)
    np.divide(mag, den, out=coh, where=den > 0)
    if coh.max(initial=0.0) > 1.0 + 1e-6:
        raise AssertionError("coherence exceeded 1 beyond rounding tolerance")
    return np.clip(coh, 0.0, 1.0)


def raw_coherence_map(noisy, filtered) -> np.ndarray:
    """7x7 coherence of an interferogram against its filtered version."""
    return estimate_coherence(noisy, filtered, RAW_COHERENCE_WINDOW)
