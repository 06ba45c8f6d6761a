"""Corpus management: WAV ingestion, segmentation, and the manifest.

Long field recordings come in as 16-bit PCM WAV at whatever rate the
recorder produced; they are canonicalized to 16 kHz mono float and cut
into short verbatim-labeled segments (hard cap 15 seconds, the longest
sample the recognizer trains on).  The manifest is a line-delimited
catalog of those segments, append-friendly so each documentation round
can grow it.
"""
from __future__ import annotations

import json
import random
import struct
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from . import dsp
from .errors import (
    AudioFormatError,
    EmptyDataError,
    UnsupportedCodecError,
    ValidationError,
)
from .orthography import Orthography, normalize

SAMPLE_RATE = 16000
MAX_SEGMENT_SECONDS = 15.0
MAX_SEGMENT_SAMPLES = int(MAX_SEGMENT_SECONDS * SAMPLE_RATE)

SPLITS = ("train", "test", "unassigned")

_MANIFEST_FIELDS = (
    "id", "source_recording", "start_sample", "end_sample",
    "transcript", "speaker_id", "dialect", "split",
)


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", s)
        if s.ndim != 1:
            raise ValidationError("audio must be mono (1-D)")
        if self.sample_rate <= 0:
            raise ValidationError("sample rate must be positive")
        if len(s) and (s.min() < -1.0 or s.max() > 1.0):
            raise ValidationError("samples out of [-1, 1]")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def slice(self, start_sample: int, end_sample: int) -> "AudioClip":
        return AudioClip(self.samples[start_sample:end_sample], self.sample_rate)


@dataclass(frozen=True)
class Segment:
    id: str
    source_recording: str
    start_sample: int
    end_sample: int
    transcript: str
    speaker_id: str = "unknown"
    dialect: str = "unknown"
    split: str = "unassigned"

    def __post_init__(self):
        if not self.id:
            raise ValidationError("segment id must be non-empty")
        if not 0 <= self.start_sample < self.end_sample:
            raise ValidationError(
                f"segment {self.id}: invalid sample range "
                f"[{self.start_sample}, {self.end_sample})"
            )
        if self.end_sample - self.start_sample > MAX_SEGMENT_SAMPLES:
            raise ValidationError(
                f"segment {self.id}: {self.duration_s:.2f} s exceeds the "
                f"{MAX_SEGMENT_SECONDS:.0f} s limit"
            )
        if self.split not in SPLITS:
            raise ValidationError(f"segment {self.id}: unknown split {self.split!r}")

    @property
    def duration_s(self) -> float:
        return (self.end_sample - self.start_sample) / SAMPLE_RATE


@dataclass
class Manifest:
    orthography_name: str
    segments: list[Segment] = field(default_factory=list)
    created: str = ""
    modified: str = ""

    def __post_init__(self):
        now = _utcnow()
        if not self.created:
            self.created = now
        if not self.modified:
            self.modified = now
        ids = [s.id for s in self.segments]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValidationError(f"duplicate segment id {dup!r}")

    def split_of(self, name: str) -> list[Segment]:
        return [s for s in self.segments if s.split == name]

    def with_segments(self, segments: list[Segment]) -> "Manifest":
        return Manifest(
            orthography_name=self.orthography_name,
            segments=segments,
            created=self.created,
            modified=_utcnow(),
        )


def _utcnow() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


# --- WAV ingestion -----------------------------------------------------------

def ingest_wav(data: bytes) -> AudioClip:
    """Decode a 16-bit PCM RIFF/WAVE file into the canonical form:
    mono (stereo averaged), 16 kHz, float amplitudes in [-1, 1]."""
    fmt, raw = _parse_riff(data)
    audio_format, channels, rate, bits = fmt
    if audio_format != 1 or bits != 16:
        raise UnsupportedCodecError(
            f"only 16-bit integer PCM is supported (got format tag {audio_format}, {bits}-bit)"
        )
    if channels not in (1, 2):
        raise UnsupportedCodecError(f"only 1-2 channels supported, got {channels}")
    frame_bytes = 2 * channels
    usable = len(raw) - len(raw) % frame_bytes
    if usable == 0:
        raise AudioFormatError("zero-length audio")
    pcm = np.frombuffer(raw[:usable], dtype="<i2").astype(np.float64)
    if channels == 2:
        pcm = pcm.reshape(-1, 2).mean(axis=1)
    samples = pcm / 32768.0
    if rate != SAMPLE_RATE:
        samples = dsp.resample_ratio(samples, rate / SAMPLE_RATE)
        np.clip(samples, -1.0, 1.0, out=samples)
    return AudioClip(samples, SAMPLE_RATE)


def _parse_riff(data: bytes) -> tuple[tuple[int, int, int, int], bytes]:
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatError("not a RIFF/WAVE file")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise AudioFormatError("truncated fmt chunk")
            audio_format, channels, rate = struct.unpack("<HHI", body[0:8])
            (bits,) = struct.unpack("<H", body[14:16])
            if rate <= 0:
                raise AudioFormatError("invalid sample rate")
            fmt = (audio_format, channels, rate, bits)
        elif cid == b"data":
            if len(body) < size:
                raise AudioFormatError("truncated data chunk")
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None:
        raise AudioFormatError("missing fmt chunk")
    if payload is None:
        raise AudioFormatError("missing data chunk")
    return fmt, payload


def write_wav(clip: AudioClip) -> bytes:
    """Encode a clip as mono 16-bit PCM WAV at its sample rate."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    raw = pcm.tobytes()
    hdr = b"RIFF" + struct.pack("<I", 36 + len(raw)) + b"WAVE"
    hdr += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, clip.sample_rate,
                                 clip.sample_rate * 2, 2, 16)
    hdr += b"data" + struct.pack("<I", len(raw))
    return hdr + raw


# --- segmentation ------------------------------------------------------------

def seconds_to_sample(seconds: float) -> int:
    # round-half-up; cut times are human-entered decimals
    return int(np.floor(seconds * SAMPLE_RATE + 0.5))


def segment_recording(
    clip: AudioClip,
    cuts: list[tuple[float, float]],
    transcripts: list[str],
    orth: Orthography,
    source_recording: str = "",
    id_prefix: str = "seg",
    speaker_id: str = "unknown",
    dialect: str = "unknown",
) -> list[Segment]:
    """Slice a recording at human-supplied cut times (seconds) into
    verbatim-labeled segments.

    Cuts must be ascending and non-overlapping, each at most 15 s; every
    transcript must tokenize under the orthography (it is stored in
    normalized form, suprasegmentals stripped).
    """
    if len(cuts) != len(transcripts):
        raise ValidationError(
            f"{len(cuts)} cuts but {len(transcripts)} transcripts"
        )
    if not cuts:
        raise EmptyDataError("no cuts supplied")
    segments = []
    prev_end = 0.0
    for i, ((start_s, end_s), text) in enumerate(zip(cuts, transcripts)):
        if end_s <= start_s:
            raise ValidationError(f"cut {i}: inverted or empty range ({start_s}, {end_s})")
        if start_s < prev_end:
            raise ValidationError(
                f"cut {i}: starts at {start_s} s, before previous cut ends at {prev_end} s"
            )
        if end_s - start_s > MAX_SEGMENT_SECONDS:
            raise ValidationError(
                f"cut {i}: {end_s - start_s:.2f} s exceeds the {MAX_SEGMENT_SECONDS:.0f} s limit"
            )
        prev_end = end_s
        start = seconds_to_sample(start_s)
        end = seconds_to_sample(end_s)
        if end > len(clip.samples):
            raise ValidationError(
                f"cut {i}: ends at sample {end}, past the recording ({len(clip.samples)})"
            )
        segments.append(Segment(
            id=f"{id_prefix}-{i:04d}",
            source_recording=source_recording,
            start_sample=start,
            end_sample=end,
            transcript=normalize(text, orth),
            speaker_id=speaker_id,
            dialect=dialect,
        ))
    return segments


FRAME_S = 0.025


def suggest_cuts(
    clip: AudioClip, max_len_s: float, silence_db: float
) -> list[tuple[float, float]]:
    """Propose cut boundaries from frame energies: silence (below the
    threshold) separates regions, and regions longer than max_len_s are
    split at their quietest 25 ms frame, as late as feasible.

    A convenience for first-pass segmentation, not a learned segmenter.
    """
    if max_len_s > MAX_SEGMENT_SECONDS:
        raise ValidationError(f"max_len_s must be <= {MAX_SEGMENT_SECONDS}")
    frame_len = int(FRAME_S * clip.sample_rate)
    n_frames = len(clip.samples) // frame_len
    if n_frames == 0:
        raise EmptyDataError("clip shorter than one analysis frame")
    frames = clip.samples[: n_frames * frame_len].reshape(n_frames, frame_len)
    energy_db = np.array([dsp.db(dsp.rms(f)) for f in frames])
    voiced = energy_db >= silence_db

    cuts: list[tuple[float, float]] = []
    i = 0
    while i < n_frames:
        if not voiced[i]:
            i += 1
            continue
        j = i
        while j < n_frames and voiced[j]:
            j += 1
        start_f, end_f = i, j
        # region end extends to the true sample end for the final frame run
        region_end_s = len(clip.samples) / clip.sample_rate if j == n_frames \
            else end_f * FRAME_S
        cuts.extend(_split_region(start_f * FRAME_S, region_end_s, energy_db, max_len_s))
        i = j
    return cuts


def _split_region(
    start_s: float, end_s: float, energy_db: np.ndarray, max_len_s: float
) -> list[tuple[float, float]]:
    pieces = []
    cur = start_s
    while end_s - cur > max_len_s:
        # candidate boundaries: frame starts in (cur, cur + max_len]
        lo = int(np.floor(cur / FRAME_S)) + 1
        hi = int(np.floor((cur + max_len_s) / FRAME_S))
        # centi-dB resolution so float dust cannot break ties; ties resolve
        # to the latest frame, making uniform audio split at max length
        window = np.round(energy_db[lo:hi + 1] * 100.0)
        rel = len(window) - 1 - int(np.argmin(window[::-1]))
        boundary = (lo + rel) * FRAME_S
        pieces.append((cur, boundary))
        cur = boundary
    pieces.append((cur, end_s))
    return pieces


# --- splits ------------------------------------------------------------------

def split_manifest(m: Manifest, train_fraction: float, seed: int) -> Manifest:
    """Deterministically shuffle and tag floor(n * fraction) segments as
    train, the rest as test."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must be strictly between 0 and 1")
    if not m.segments:
        raise EmptyDataError("cannot split an empty manifest")
    order = list(range(len(m.segments)))
    random.Random(seed).shuffle(order)
    n_train = int(len(order) * train_fraction)
    train_idx = set(order[:n_train])
    segments = [
        replace(s, split="train" if i in train_idx else "test")
        for i, s in enumerate(m.segments)
    ]
    return m.with_segments(segments)


# --- serialization -----------------------------------------------------------

def export_manifest(m: Manifest, recordings_root=None) -> bytes:
    """Serialize to line-delimited JSON: a header record, then one record
    per segment.  With recordings_root given, verify every referenced
    recording exists."""
    if recordings_root is not None:
        missing = sorted({
            s.source_recording for s in m.segments
            if not (recordings_root / s.source_recording).exists()
        })
        if missing:
            raise ValidationError("missing recordings: " + ", ".join(missing))
    lines = [json.dumps({
        "orthography": m.orthography_name,
        "created": m.created,
        "modified": m.modified,
    }, ensure_ascii=False)]
    for s in m.segments:
        lines.append(json.dumps(
            {k: getattr(s, k if k != "id" else "id") for k in _MANIFEST_FIELDS},
            ensure_ascii=False,
        ))
    return ("\n".join(lines) + "\n").encode("utf-8")


def import_manifest(data: bytes) -> Manifest:
    """Parse and re-validate a serialized manifest; every segment invariant
    is enforced again on the way in."""
    text = data.decode("utf-8")
    lines = [l for l in text.splitlines()]
    header = None
    segments = []
    seg_lineno = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValidationError(f"line {lineno}: invalid JSON: {e}") from None
        if header is None:
            if "orthography" not in rec:
                raise ValidationError(f"line {lineno}: first record must be the manifest header")
            header = rec
            continue
        missing = [k for k in _MANIFEST_FIELDS if k not in rec]
        if missing:
            raise ValidationError(f"line {lineno}: missing fields {missing}")
        try:
            segments.append(Segment(**{k: rec[k] for k in _MANIFEST_FIELDS}))
        except ValidationError as e:
            raise ValidationError(f"line {lineno}: {e}") from None
        seg_lineno.append(lineno)
    if header is None:
        raise ValidationError("empty manifest file (missing header record)")
    return Manifest(
        orthography_name=header["orthography"],
        segments=segments,
        created=header.get("created", ""),
        modified=header.get("modified", ""),
    )
