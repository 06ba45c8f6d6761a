"""Shared audio/test utilities."""
from __future__ import annotations

import struct

import numpy as np

from fieldasr.corpus import SAMPLE_RATE


def tone(freq: float, dur_s: float, rate: int = SAMPLE_RATE, amp: float = 0.5) -> np.ndarray:
    t = np.arange(int(dur_s * rate)) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def wav_bytes(samples: np.ndarray, rate: int, channels: int = 1, bits: int = 16,
              fmt_tag: int = 1) -> bytes:
    """Hand-rolled WAV encoder (independent of the package's writer)."""
    if bits == 16:
        pcm = np.clip(np.round(samples * 32768), -32768, 32767).astype("<i2")
    elif bits == 8:
        pcm = np.clip(np.round(samples * 127 + 128), 0, 255).astype("u1")
    else:
        raise ValueError(bits)
    if channels == 2 and pcm.ndim == 1:
        pcm = np.repeat(pcm[:, None], 2, axis=1)
    raw = pcm.tobytes()
    block = channels * bits // 8
    out = b"RIFF" + struct.pack("<I", 36 + len(raw)) + b"WAVE"
    out += b"fmt " + struct.pack("<IHHIIHH", 16, fmt_tag, channels, rate,
                                 rate * block, block, bits)
    out += b"data" + struct.pack("<I", len(raw)) + raw
    return out


def peak_freq(samples: np.ndarray, rate: int = SAMPLE_RATE) -> float:
    """Dominant spectral peak via a long zero-padded FFT (sub-Hz resolution)."""
    n = 1 << 18
    spec = np.abs(np.fft.rfft(samples * np.hanning(len(samples)), n=n))
    return float(np.argmax(spec) * rate / n)


def correlation(a: np.ndarray, b: np.ndarray) -> float:
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    return float(np.dot(a, b) / np.sqrt(np.dot(a, a) * np.dot(b, b)))
