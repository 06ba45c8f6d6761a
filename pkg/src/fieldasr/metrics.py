"""Edit-distance metrics, model evaluation, and transcription-speedup reports.

CER counts errors over graphemes (via orthography tokenization), not
Unicode codepoints: a substituted two-codepoint grapheme is one error.
The corpus-level figure is a micro-average, total edits over total
reference length, which differs from the mean of per-sample rates when
sample lengths differ.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .errors import EmptyDataError, ValidationError
from .orthography import Orthography, tokenize


def edit_distance(a, b) -> int:
    """Levenshtein distance with unit costs over two symbol sequences."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, sa in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, sb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (sa != sb),
            )
        prev = cur
    return prev[-1]


def cer(ref: str, hyp: str, orth: Orthography) -> float:
    """Character error rate over grapheme sequences; may exceed 1."""
    ref_syms = [g.symbol for g in tokenize(ref, orth)]
    if not ref_syms:
        raise EmptyDataError("reference is empty after tokenization")
    hyp_syms = [g.symbol for g in tokenize(hyp, orth)]
    return edit_distance(ref_syms, hyp_syms) / len(ref_syms)


def wer(ref: str, hyp: str) -> float:
    """Word error rate; words split on whitespace."""
    ref_words = ref.split()
    if not ref_words:
        raise EmptyDataError("reference contains no words")
    return edit_distance(ref_words, hyp.split()) / len(ref_words)


# --- model evaluation ---------------------------------------------------------

@dataclass
class SegmentEval:
    id: str
    ref: str
    hyp: str
    edits: int
    ref_len: int

    @property
    def cer(self) -> float:
        return self.edits / self.ref_len


@dataclass
class EvalReport:
    per_segment: list[SegmentEval]

    @property
    def total_edits(self) -> int:
        return sum(s.edits for s in self.per_segment)

    @property
    def total_ref(self) -> int:
        return sum(s.ref_len for s in self.per_segment)

    @property
    def aggregate_cer(self) -> float:
        return self.total_edits / self.total_ref

    def to_jsonl(self) -> str:
        lines = [json.dumps({
            "id": s.id, "ref": s.ref, "hyp": s.hyp,
            "edits": s.edits, "ref_len": s.ref_len, "cer": s.cer,
        }, ensure_ascii=False) for s in self.per_segment]
        lines.append(json.dumps({
            "aggregate_cer": self.aggregate_cer,
            "total_edits": self.total_edits,
            "total_ref": self.total_ref,
        }))
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        rows = [("segment", "ref len", "edits", "CER %")]
        for s in self.per_segment:
            rows.append((s.id, str(s.ref_len), str(s.edits), f"{100 * s.cer:.1f}"))
        rows.append(("TOTAL", str(self.total_ref), str(self.total_edits),
                     f"{100 * self.aggregate_cer:.1f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join(
            "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows
        ) + "\n"


def evaluate(model, manifest, vocab, orth: Orthography, audio_provider) -> EvalReport:
    """Decode every test-split segment and score it against its transcript."""
    from .acoustic import forward, greedy_text  # late import: avoids a module cycle

    segments = manifest.split_of("test")
    if not segments:
        raise EmptyDataError("manifest has no test segments")
    per_segment = []
    for seg in segments:
        hyp = greedy_text(forward(model, audio_provider(seg)), vocab)
        ref_syms = [g.symbol for g in tokenize(seg.transcript, orth)]
        hyp_syms = [g.symbol for g in tokenize(hyp, orth)]
        per_segment.append(SegmentEval(
            id=seg.id, ref=seg.transcript, hyp=hyp,
            edits=edit_distance(ref_syms, hyp_syms),
            ref_len=len(ref_syms),
        ))
    return EvalReport(per_segment)


# --- transcription speedups ---------------------------------------------------

@dataclass(frozen=True)
class SpeedupEntry:
    sample_id: str
    length_s: float
    time_without_s: float
    time_with_s: float
    cer_without: float = 0.0
    cer_with: float = 0.0

    def __post_init__(self):
        if self.time_without_s <= 0 or self.time_with_s <= 0:
            raise ValidationError("transcription times must be positive")
        if self.cer_without < 0 or self.cer_with < 0:
            raise ValidationError("CERs must be >= 0")

    @property
    def speedup(self) -> float:
        return self.time_without_s / self.time_with_s


def format_speedup(value: float) -> str:
    """One decimal, round-half-up, trailing multiplication sign."""
    return str(Decimal(value).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)) + "×"


def _fmt_duration(seconds: float) -> str:
    if seconds < 180:
        return f"{seconds:.0f}sec"
    return f"{seconds / 60:.0f}min"


def speedup_report(entries: list[SpeedupEntry]) -> str:
    """Text table of with/without-assistance transcription timings, one row
    per sample: Length, Without (time, CER%), With (time, CER%), Speedup."""
    if not entries:
        raise EmptyDataError("no speedup entries recorded")
    rows = [("Length", "Without", "CER (%)", "With", "CER (%)", "Speedup")]
    for e in entries:
        rows.append((
            _fmt_duration(e.length_s),
            _fmt_duration(e.time_without_s), f"{100 * e.cer_without:.1f}",
            _fmt_duration(e.time_with_s), f"{100 * e.cer_with:.1f}",
            format_speedup(e.speedup),
        ))
    widths = [max(len(r[i]) for r in rows) for i in range(6)]
    return "\n".join(
        "  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows
    ) + "\n"


def speedup_jsonl(entries: list[SpeedupEntry]) -> str:
    lines = []
    for e in entries:
        lines.append(json.dumps({
            "sample_id": e.sample_id, "length_s": e.length_s,
            "time_without_s": e.time_without_s, "time_with_s": e.time_with_s,
            "cer_without": e.cer_without, "cer_with": e.cer_with,
            "speedup": e.speedup, "speedup_display": format_speedup(e.speedup),
        }, ensure_ascii=False))
    return "\n".join(lines) + "\n"
