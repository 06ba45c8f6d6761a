"""Training-set augmentation: speed, pitch, and microphone-noise perturbations.

With all speech coming from one or two speakers, the recognizer happily
memorizes their delivery.  These perturbations spread the training
distribution along the three axes that differ most between speakers and
recording sessions: utterance speed, voice pitch, and channel noise.
Labels never change; every output clip carries its source transcript.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .corpus import AudioClip
from .errors import EmptyDataError, ValidationError

# WSOLA at speech scale: 25 ms windows, 10 ms synthesis hop, +-5 ms search
WSOLA_WINDOW_S = 0.025
WSOLA_HOP_S = 0.010
WSOLA_SEARCH_S = 0.005


@dataclass(frozen=True)
class AugmentSpec:
    speed_factors: tuple[float, ...] = (0.9, 1.1)
    pitch_semitones: tuple[float, ...] = (-2.0, 2.0)
    noise_snr_db: tuple[float, ...] = (15.0, 25.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "speed_factors", tuple(self.speed_factors))
        object.__setattr__(self, "pitch_semitones", tuple(self.pitch_semitones))
        object.__setattr__(self, "noise_snr_db", tuple(self.noise_snr_db))
        for f in self.speed_factors:
            if not 0.5 <= f <= 2.0:
                raise ValidationError(f"speed factor {f} outside [0.5, 2.0]")
        for s in self.pitch_semitones:
            if abs(s) > 12:
                raise ValidationError(f"pitch shift {s} outside +-12 semitones")
        for snr in self.noise_snr_db:
            if not 0.0 <= snr <= 60.0:
                raise ValidationError(f"SNR {snr} dB outside [0, 60]")

    @classmethod
    def none(cls) -> "AugmentSpec":
        return cls(speed_factors=(), pitch_semitones=(), noise_snr_db=())


def speed_perturb(clip: AudioClip, factor: float) -> AudioClip:
    """Plain resampling: changes speed and pitch together by ``factor``.
    factor 1.0 is a bit-exact pass-through."""
    if not 0.5 <= factor <= 2.0:
        raise ValidationError(f"speed factor {factor} outside [0.5, 2.0]")
    out = dsp.resample_ratio(clip.samples, factor)
    return AudioClip(np.clip(out, -1.0, 1.0), clip.sample_rate)


def time_stretch(clip: AudioClip, rate: float) -> AudioClip:
    """Pitch-preserving stretch by waveform-similarity overlap-add.

    Output length is round(len / rate) to within one synthesis hop.
    """
    if not 0.5 <= rate <= 2.0:
        raise ValidationError(f"stretch rate {rate} outside [0.5, 2.0]")
    x = clip.samples
    win = int(WSOLA_WINDOW_S * clip.sample_rate)
    hop = int(WSOLA_HOP_S * clip.sample_rate)
    search = int(WSOLA_SEARCH_S * clip.sample_rate)
    if len(x) < win:
        raise ValidationError("clip shorter than one analysis window")
    target_len = int(round(len(x) / rate))
    window = np.hanning(win)

    out = np.zeros(target_len + win)
    weight = np.zeros(target_len + win)
    prev_pos = None
    k = 0
    while k * hop < target_len:
        nominal = min(int(round(k * hop * rate)), len(x) - win)
        if prev_pos is None:
            pos = nominal
        else:
            # best continuation of the previously copied frame
            ref_start = prev_pos + hop
            ref = x[ref_start:ref_start + win]
            if len(ref) < win:
                pos = min(nominal, len(x) - win)
            else:
                lo = max(0, nominal - search)
                hi = min(len(x) - win, nominal + search)
                region = x[lo:hi + win]
                scores = np.correlate(region, ref, mode="valid")
                pos = lo + int(np.argmax(scores))
        out[k * hop:k * hop + win] += window * x[pos:pos + win]
        weight[k * hop:k * hop + win] += window
        prev_pos = pos
        k += 1
    filled = weight > 1e-3
    out[filled] /= weight[filled]
    out = out[:target_len]
    return AudioClip(np.clip(out, -1.0, 1.0), clip.sample_rate)


def pitch_shift(clip: AudioClip, semitones: float) -> AudioClip:
    """Shift pitch by resampling (speed+pitch) then stretching the duration
    back, leaving length within one hop of the input."""
    if abs(semitones) > 12:
        raise ValidationError(f"pitch shift {semitones} outside +-12 semitones")
    factor = 2.0 ** (semitones / 12.0)
    sped = speed_perturb(clip, factor)
    # restore the original duration; clamp away float dust at the +-12 edges
    rate = min(2.0, max(0.5, len(sped.samples) / len(clip.samples)))
    return time_stretch(sped, rate)


def add_noise(clip: AudioClip, snr_db: float, seed: int) -> AudioClip:
    """Additive white Gaussian noise at the requested signal-to-noise ratio."""
    signal_rms = dsp.rms(clip.samples)
    if signal_rms == 0.0:
        raise EmptyDataError("cannot scale noise against a silent clip")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(clip.samples))
    noise *= signal_rms / (dsp.rms(noise) * 10.0 ** (snr_db / 20.0))
    out = np.clip(clip.samples + noise, -1.0, 1.0)
    return AudioClip(out, clip.sample_rate)


def expand(
    items: list[tuple[AudioClip, str]], spec: AugmentSpec
) -> list[tuple[AudioClip, str]]:
    """Cartesian expansion: for every (clip, transcript) emit the original
    plus one clip per configured perturbation value, transcript unchanged.

    Noise seeds are derived per (item, perturbation) so the result does not
    depend on processing order.
    """
    out: list[tuple[AudioClip, str]] = []
    for i, (clip, transcript) in enumerate(items):
        out.append((clip, transcript))
        for factor in spec.speed_factors:
            out.append((speed_perturb(clip, factor), transcript))
        for semis in spec.pitch_semitones:
            out.append((pitch_shift(clip, semis), transcript))
        for j, snr in enumerate(spec.noise_snr_db):
            seed = int(np.random.SeedSequence([spec.seed, i, j]).generate_state(1)[0])
            out.append((add_noise(clip, snr, seed), transcript))
    return out
