"""Small shared signal-processing primitives.

The resampler is a 64-tap Kaiser-windowed sinc interpolator: quality is
plenty for speech at 16 kHz and, unlike a library black box, every
coefficient is reproducible from this file.
"""
from __future__ import annotations

import numpy as np

RESAMPLE_TAPS = 64
KAISER_BETA = 8.6


def _kaiser_continuous(t: np.ndarray, taps: int, beta: float) -> np.ndarray:
    half = taps / 2.0
    inside = np.abs(t) <= half
    x = np.where(inside, t / half, 1.0)
    w = np.i0(beta * np.sqrt(np.maximum(0.0, 1.0 - x * x))) / np.i0(beta)
    return np.where(inside, w, 0.0)


def resample_ratio(x: np.ndarray, ratio: float) -> np.ndarray:
    """Band-limited resampling: output[m] = x evaluated at m * ratio.

    ratio > 1 shortens the signal (and lowpasses to avoid aliasing);
    ratio < 1 stretches it.  Output length is round(len(x) / ratio).
    ratio == 1 is a bit-exact copy.
    """
    x = np.asarray(x, dtype=np.float64)
    if ratio == 1.0:
        return x.copy()
    n = len(x)
    m = int(round(n / ratio))
    if m <= 0 or n == 0:
        return np.zeros(0)
    pos = np.arange(m) * ratio
    base = np.floor(pos).astype(np.int64)
    offs = np.arange(-RESAMPLE_TAPS // 2 + 1, RESAMPLE_TAPS // 2 + 1)
    t = offs[None, :] - (pos - base)[:, None]
    fc = min(1.0, 1.0 / ratio)
    kernel = fc * np.sinc(fc * t) * _kaiser_continuous(t, RESAMPLE_TAPS, KAISER_BETA)
    xpad = np.pad(x, (RESAMPLE_TAPS, RESAMPLE_TAPS))
    segments = xpad[base[:, None] + offs[None, :] + RESAMPLE_TAPS]
    return (segments * kernel).sum(axis=1)


def rms(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return 0.0
    return float(np.sqrt(np.mean(x * x)))


def db(amplitude_ratio: float, floor: float = 1e-12) -> float:
    return float(20.0 * np.log10(max(amplitude_ratio, floor)))
