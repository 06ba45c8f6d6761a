"""Command-line orchestration of the documentation loop.

The loop runs: ``ingest`` field recordings against human cut files,
``train`` the recognizer, ``transcribe`` new audio into draft cut files,
``accept`` corrected drafts back into the corpus, retrain.  Long audio
is decoded in overlapping 15 s windows; each window's frames are trimmed
by half the overlap on interior edges, so the decoded regions tile the
recording with no duplicated text (boundary words may suffer; drafts are
corrected by humans anyway).

Every manifest-writing command is atomic (validate everything, then
write-then-rename) and takes a project lock.  Exit codes: 0 success,
1 validation error, 2 I/O error or held lock, 3 empty/infeasible data.
"""
from __future__ import annotations

import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
from filelock import FileLock, Timeout

from . import figures
from .acoustic import TrainConfig, forward, load_model, save_model, sweep as run_sweep, train as run_train
from .augment import add_noise, pitch_shift, speed_perturb
from .corpus import (
    AudioClip,
    Manifest,
    export_manifest,
    ingest_wav,
    seconds_to_sample,
    segment_recording,
    write_wav,
)
from .ctc import LogProbMatrix, beam_decode, collapse
from .errors import (
    EmptyDataError,
    InfeasibleTargetError,
    ModelFormatError,
    ValidationError,
)
from .metrics import SpeedupEntry, cer, evaluate, speedup_jsonl, speedup_report
from .orthography import build_vocab
from .project import ProjectConfig, load_project

DEFAULT_MODEL_NAME = "model.nlr"

EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_EMPTY = 3


def guarded(fn):
    """Map toolkit exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (EmptyDataError, InfeasibleTargetError) as e:
            _fail(EXIT_EMPTY, str(e))
        except (ValidationError, ModelFormatError) as e:
            _fail(EXIT_VALIDATION, str(e))
        except Timeout:
            _fail(EXIT_IO, "another command holds the project lock")
        except FileNotFoundError as e:
            _fail(EXIT_IO, str(e))
        except OSError as e:
            _fail(EXIT_IO, str(e))

    return wrapper


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path),
              default=Path("project.yaml"), show_default=True,
              help="Project config file.")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx, config_path: Path, seed: int | None, as_json: bool):
    """Documentation-loop toolkit: corpus, training, drafting, collection."""
    ctx.obj = {"config_path": config_path, "seed": seed, "json": as_json}


def _project(ctx) -> ProjectConfig:
    return load_project(ctx.obj["config_path"])


def _emit(ctx, result: dict, human: str):
    if ctx.obj["json"]:
        click.echo(json.dumps(result, ensure_ascii=False))
    else:
        click.echo(human)


def _lock(project: ProjectConfig) -> FileLock:
    return FileLock(project.lock_path, timeout=0)


def make_audio_provider(project: ProjectConfig):
    """Segment -> AudioClip, caching whole ingested recordings."""
    cache: dict[str, AudioClip] = {}

    def provider(segment):
        name = segment.source_recording
        if name not in cache:
            path = project.recordings_dir / name
            cache[name] = ingest_wav(path.read_bytes())
        return cache[name].slice(segment.start_sample, segment.end_sample)

    return provider


# --- cut files ----------------------------------------------------------------

def parse_cuts_file(text: str) -> list[tuple[float, float, str]]:
    """One ``start_s<TAB>end_s<TAB>transcript`` row per line."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValidationError(
                f"cuts line {lineno}: expected start<TAB>end<TAB>transcript, got {line!r}"
            )
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError:
            raise ValidationError(f"cuts line {lineno}: bad timestamps {parts[:2]}") from None
        rows.append((start, end, parts[2]))
    return rows


def format_cuts_file(rows: list[tuple[float, float, str]]) -> str:
    return "".join(f"{s:.2f}\t{e:.2f}\t{t}\n" for s, e, t in rows)


def plan_chunks(duration_s: float, window_s: float, overlap_s: float) -> list[tuple[float, float]]:
    """Overlapping decode windows covering the whole duration."""
    if duration_s <= 0:
        raise EmptyDataError("empty audio")
    chunks = []
    start = 0.0
    step = window_s - overlap_s
    while True:
        end = min(start + window_s, duration_s)
        chunks.append((start, end))
        if end >= duration_s:
            return chunks
        start += step


# --- subcommands ---------------------------------------------------------------

@main.command()
@click.argument("wav_path", type=click.Path(path_type=Path))
@click.argument("cuts_file", type=click.Path(path_type=Path))
@click.option("--speaker", default="unknown")
@click.option("--dialect", default="unknown")
@click.pass_context
@guarded
def ingest(ctx, wav_path: Path, cuts_file: Path, speaker: str, dialect: str):
    """Ingest a recording plus its cut file into the corpus."""
    project = _project(ctx)
    with _lock(project):
        clip = ingest_wav(wav_path.read_bytes())
        rows = parse_cuts_file(cuts_file.read_text(encoding="utf-8"))
        stem = wav_path.stem
        segments = segment_recording(
            clip,
            cuts=[(s, e) for s, e, _ in rows],
            transcripts=[t for _, _, t in rows],
            orth=project.orthography,
            source_recording=f"{stem}.wav",
            id_prefix=stem,
            speaker_id=speaker,
            dialect=dialect,
        )
        manifest = project.load_manifest()
        updated = manifest.with_segments(manifest.segments + segments)
        project.recordings_dir.mkdir(parents=True, exist_ok=True)
        (project.recordings_dir / f"{stem}.wav").write_bytes(write_wav(clip))
        project.save_manifest(updated)
    _emit(ctx, {"added": len(segments), "total": len(updated.segments)},
          f"added {len(segments)} segments ({len(updated.segments)} total)")


def _train_config(ctx, project, epochs, lr, batch_size, freeze_encoder,
                  freeze_context, no_augment) -> TrainConfig:
    cfg = project.train_defaults
    overrides = {}
    if epochs is not None:
        overrides["epochs"] = epochs
    if lr is not None:
        overrides["learning_rate"] = lr
    if batch_size is not None:
        overrides["batch_size"] = batch_size
    if freeze_encoder:
        overrides["freeze_encoder"] = True
    if freeze_context:
        overrides["freeze_context"] = True
    if no_augment:
        overrides["augment"] = None
    if ctx.obj["seed"] is not None:
        overrides["seed"] = ctx.obj["seed"]
    return replace(cfg, **overrides) if overrides else cfg


def _prepare_split(project, manifest: Manifest, split_fraction, seed) -> Manifest:
    """Promote unassigned segments to train; optionally re-split everything."""
    from .corpus import split_manifest

    promoted = [replace(s, split="train") if s.split == "unassigned" else s
                for s in manifest.segments]
    manifest = manifest.with_segments(promoted)
    if split_fraction is not None:
        manifest = split_manifest(manifest, split_fraction, seed)
    return manifest


@main.command(name="train")
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--freeze-encoder", is_flag=True)
@click.option("--freeze-context", is_flag=True)
@click.option("--no-augment", is_flag=True)
@click.option("--split", "split_fraction", type=float, default=None,
              help="Re-split the manifest (train fraction) before training.")
@click.option("--out", "model_name", default=DEFAULT_MODEL_NAME, show_default=True)
@click.pass_context
@guarded
def train_cmd(ctx, epochs, lr, batch_size, freeze_encoder, freeze_context,
              no_augment, split_fraction, model_name):
    """Train on the train split, evaluate on the test split, save the model."""
    project = _project(ctx)
    config = _train_config(ctx, project, epochs, lr, batch_size,
                           freeze_encoder, freeze_context, no_augment)
    with _lock(project):
        manifest = _prepare_split(project, project.load_manifest(),
                                  split_fraction, config.seed)
        if not manifest.segments:
            raise EmptyDataError("manifest is empty; ingest recordings first")
        project.save_manifest(manifest)
    vocab = build_vocab(project.orthography)
    provider = make_audio_provider(project)
    model, history = run_train(manifest, vocab, config, provider)

    project.models_dir.mkdir(parents=True, exist_ok=True)
    model_path = project.models_dir / model_name
    model_path.write_bytes(save_model(model))
    project.reports_dir.mkdir(parents=True, exist_ok=True)
    history_rows = [{"epoch": h.epoch, "loss": h.loss, "train_cer": h.train_cer,
                     "skipped": h.skipped} for h in history]
    (project.reports_dir / "history.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in history_rows), encoding="utf-8")
    figures.history_figure(history, project.reports_dir / "history.png")

    result = {
        "model": str(model_path),
        "train_segments": len(manifest.split_of("train")),
        "epochs_run": len(history),
        "final_loss": history[-1].loss,
        "final_train_cer": history[-1].train_cer,
    }
    lines = [
        f"trained on {result['train_segments']} segments for {len(history)} epochs",
        f"final train CER {100 * history[-1].train_cer:.1f}%",
        f"model written to {model_path}",
    ]
    if manifest.split_of("test"):
        report = evaluate(model, manifest, vocab, project.orthography, provider)
        (project.reports_dir / "eval.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
        figures.cer_figure(report, project.reports_dir / "cer.png")
        result["test_cer"] = report.aggregate_cer
        lines.append(f"test CER {100 * report.aggregate_cer:.1f}%")
    else:
        lines.append("no test split; skipping evaluation")
    _emit(ctx, result, "\n".join(lines))


@main.command(name="sweep")
@click.option("--grid", "grid_path", type=click.Path(path_type=Path), required=True,
              help="YAML list of TrainConfig overrides.")
@click.option("--split", "split_fraction", type=float, default=None)
@click.option("--out", "model_name", default="sweep-best.nlr", show_default=True)
@click.pass_context
@guarded
def sweep_cmd(ctx, grid_path: Path, split_fraction, model_name):
    """Train every config in the grid and rank by held-out CER."""
    import yaml

    project = _project(ctx)
    raw = yaml.safe_load(grid_path.read_text(encoding="utf-8"))
    if not isinstance(raw, list) or not raw:
        raise ValidationError("grid file must be a non-empty YAML list of override maps")
    base = _train_config(ctx, project, None, None, None, False, False, False)
    configs = []
    for entry in raw:
        entry = dict(entry or {})
        if entry.pop("no_augment", False):
            entry["augment"] = None
        configs.append(replace(base, **entry))
    with _lock(project):
        manifest = _prepare_split(project, project.load_manifest(),
                                  split_fraction, base.seed)
        if not manifest.split_of("test"):
            raise EmptyDataError("no test split to rank on; pass --split FRACTION")
        project.save_manifest(manifest)
    vocab = build_vocab(project.orthography)
    provider = make_audio_provider(project)
    results = run_sweep(manifest, vocab, configs, provider)

    project.reports_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for rank, r in enumerate(results, start=1):
        rows.append({
            "rank": rank,
            "test_cer": r.test_cer,
            "learning_rate": r.config.learning_rate,
            "epochs": r.config.epochs,
            "batch_size": r.config.batch_size,
            "freeze_encoder": r.config.freeze_encoder,
            "freeze_context": r.config.freeze_context,
            "augmented": r.config.augment is not None,
            "history": [{"epoch": h.epoch, "loss": h.loss, "train_cer": h.train_cer}
                        for h in r.history],
        })
    (project.reports_dir / "sweep.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    project.models_dir.mkdir(parents=True, exist_ok=True)
    (project.models_dir / model_name).write_bytes(save_model(results[0].model))
    human = ["rank  test CER  lr        epochs  frozen"]
    for r in rows:
        frozen = "+".join(n for n, f in (("enc", r["freeze_encoder"]),
                                         ("ctx", r["freeze_context"])) if f) or "-"
        human.append(f"{r['rank']:>4}  {100 * r['test_cer']:7.1f}%  "
                     f"{r['learning_rate']:<8g}  {r['epochs']:>6}  {frozen}")
    _emit(ctx, {"results": rows}, "\n".join(human))


@main.command(name="augment-preview")
@click.argument("wav_path", type=click.Path(path_type=Path))
@click.argument("out_dir", type=click.Path(path_type=Path))
@click.pass_context
@guarded
def augment_preview(ctx, wav_path: Path, out_dir: Path):
    """Write each configured perturbation of a recording for listening checks."""
    project = _project(ctx)
    spec = project.augment_spec
    clip = ingest_wav(wav_path.read_bytes())
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [("original.wav", clip)]
    for f in spec.speed_factors:
        written.append((f"speed_{f:g}.wav", speed_perturb(clip, f)))
    for s in spec.pitch_semitones:
        written.append((f"pitch_{s:+g}.wav", pitch_shift(clip, s)))
    for i, snr in enumerate(spec.noise_snr_db):
        written.append((f"noise_{snr:g}dB.wav", add_noise(clip, snr, spec.seed + i)))
    for name, c in written:
        (out_dir / name).write_bytes(write_wav(c))
    _emit(ctx, {"written": [n for n, _ in written], "dir": str(out_dir)},
          "\n".join(str(out_dir / n) for n, _ in written))


def _default_draft_path(audio_path: Path) -> Path:
    return audio_path.with_suffix(".draft.tsv")


@main.command()
@click.argument("audio_path", type=click.Path(path_type=Path))
@click.option("--model", "model_name", default=DEFAULT_MODEL_NAME, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@click.option("--beam", type=int, default=None,
              help="Beam width for decoding (default: greedy).")
@click.pass_context
@guarded
def transcribe(ctx, audio_path: Path, model_name: str, out_path: Path | None, beam: int | None):
    """Draft-transcribe audio: one start/end/text line per decoded region."""
    project = _project(ctx)
    model_path = project.models_dir / model_name
    if not model_path.exists():
        raise FileNotFoundError(f"model not found: {model_path} (train first)")
    model = load_model(model_path.read_bytes())
    clip = ingest_wav(audio_path.read_bytes())
    rows = _transcribe_clip(clip, model, project.window_s, project.overlap_s, beam)
    out_path = out_path or _default_draft_path(audio_path)
    out_path.write_text(format_cuts_file(rows), encoding="utf-8")
    _emit(ctx, {"draft": str(out_path), "chunks": len(rows)},
          f"wrote {len(rows)} draft lines to {out_path}")


def _transcribe_clip(clip: AudioClip, model, window_s: float, overlap_s: float,
                     beam: int | None) -> list[tuple[float, float, str]]:
    chunks = plan_chunks(clip.duration_s, window_s, overlap_s)
    half = overlap_s / 2.0
    hop_s = model.spec.feature_spec.hop_ms / 1000.0
    rows = []
    for i, (start, end) in enumerate(chunks):
        piece = clip.slice(seconds_to_sample(start), seconds_to_sample(end))
        lp = forward(model, piece)
        head = half if i > 0 else 0.0
        tail = half if i < len(chunks) - 1 else 0.0
        frame_starts = hop_s * np.arange(lp.T)
        keep = (frame_starts >= head) & (frame_starts < (end - start) - tail)
        trimmed = LogProbMatrix(lp.values[keep])
        if beam is not None:
            text = beam_decode(trimmed, model.vocab, beam)
        else:
            path = trimmed.values.argmax(axis=1).tolist()
            text = collapse(path, model.vocab)
        rows.append((start + head, end - tail, text))
    return rows


@main.command()
@click.argument("audio_path", type=click.Path(path_type=Path))
@click.argument("cuts_file", type=click.Path(path_type=Path))
@click.option("--draft", "draft_path", type=click.Path(path_type=Path), default=None,
              help="Draft produced by `transcribe` (default: alongside the audio).")
@click.option("--speaker", default="unknown")
@click.option("--dialect", default="unknown")
@click.option("--minutes-with", type=float, default=None,
              help="Operator-measured transcription time with the draft.")
@click.option("--minutes-without", type=float, default=None,
              help="Operator-measured time for the no-assistance baseline.")
@click.option("--cer-without", type=float, default=0.0)
@click.pass_context
@guarded
def accept(ctx, audio_path: Path, cuts_file: Path, draft_path, speaker, dialect,
           minutes_with, minutes_without, cer_without):
    """Accept corrected cuts into the corpus and record draft-quality stats."""
    project = _project(ctx)
    with _lock(project):
        clip = ingest_wav(audio_path.read_bytes())
        rows = parse_cuts_file(cuts_file.read_text(encoding="utf-8"))
        stem = audio_path.stem
        segments = segment_recording(
            clip,
            cuts=[(s, e) for s, e, _ in rows],
            transcripts=[t for _, _, t in rows],
            orth=project.orthography,
            source_recording=f"{stem}.wav",
            id_prefix=stem,
            speaker_id=speaker,
            dialect=dialect,
        )
        manifest = project.load_manifest()
        updated = manifest.with_segments(manifest.segments + segments)

        corrected = " ".join(s.transcript for s in segments)
        draft_path = Path(draft_path) if draft_path else _default_draft_path(audio_path)
        draft_cer = None
        if draft_path.exists():
            draft_rows = parse_cuts_file(draft_path.read_text(encoding="utf-8"))
            draft_text = " ".join(t for _, _, t in draft_rows)
            draft_cer = cer(corrected, draft_text, project.orthography)

        project.recordings_dir.mkdir(parents=True, exist_ok=True)
        (project.recordings_dir / f"{stem}.wav").write_bytes(write_wav(clip))
        project.save_manifest(updated)

        project.reports_dir.mkdir(parents=True, exist_ok=True)
        with open(project.reports_dir / "accept_log.jsonl", "a", encoding="utf-8") as f:
            f.write(json.dumps({
                "audio": audio_path.name, "segments": len(segments),
                "draft_cer": draft_cer,
            }, ensure_ascii=False) + "\n")
        if minutes_with is not None and minutes_without is not None:
            entry = SpeedupEntry(
                sample_id=stem,
                length_s=clip.duration_s,
                time_without_s=minutes_without * 60.0,
                time_with_s=minutes_with * 60.0,
                cer_without=cer_without,
                cer_with=draft_cer if draft_cer is not None else 0.0,
            )
            with open(project.speedups_path, "a", encoding="utf-8") as f:
                f.write(speedup_jsonl([entry]))
    result = {"added": len(segments), "draft_cer": draft_cer,
              "total": len(updated.segments)}
    human = f"accepted {len(segments)} segments"
    if draft_cer is not None:
        human += f"; draft CER vs correction {100 * draft_cer:.1f}%"
    _emit(ctx, result, human)


@main.command(name="eval")
@click.option("--model", "model_name", default=DEFAULT_MODEL_NAME, show_default=True)
@click.pass_context
@guarded
def eval_cmd(ctx, model_name: str):
    """Score the current model on the manifest's test split."""
    project = _project(ctx)
    model_path = project.models_dir / model_name
    if not model_path.exists():
        raise FileNotFoundError(f"model not found: {model_path}")
    model = load_model(model_path.read_bytes())
    manifest = project.load_manifest()
    vocab = build_vocab(project.orthography)
    report = evaluate(model, manifest, vocab, project.orthography,
                      make_audio_provider(project))
    project.reports_dir.mkdir(parents=True, exist_ok=True)
    (project.reports_dir / "eval.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
    figures.cer_figure(report, project.reports_dir / "cer.png")
    _emit(ctx, {"aggregate_cer": report.aggregate_cer,
                "segments": len(report.per_segment)},
          report.format_table())


@main.command()
@click.option("--speedups", "speedups_path", type=click.Path(path_type=Path),
              default=None, help="Override the speedup record file.")
@click.pass_context
@guarded
def report(ctx, speedups_path):
    """Speedup and accuracy tables (and figures) from recorded entries."""
    project = _project(ctx)
    path = Path(speedups_path) if speedups_path else project.speedups_path
    entries = []
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            entries.append(SpeedupEntry(
                sample_id=rec["sample_id"], length_s=rec["length_s"],
                time_without_s=rec["time_without_s"], time_with_s=rec["time_with_s"],
                cer_without=rec.get("cer_without", 0.0),
                cer_with=rec.get("cer_with", 0.0),
            ))
    if not entries:
        _emit(ctx, {"entries": 0}, "no data: no transcription timings recorded yet")
        return
    project.reports_dir.mkdir(parents=True, exist_ok=True)
    (project.reports_dir / "speedup_report.jsonl").write_text(
        speedup_jsonl(entries), encoding="utf-8")
    figures.speedup_figure(entries, project.reports_dir / "speedup.png")
    human = speedup_report(entries)
    eval_path = project.reports_dir / "eval.jsonl"
    result = {"entries": len(entries)}
    if eval_path.exists():
        last = json.loads(eval_path.read_text(encoding="utf-8").splitlines()[-1])
        human += f"\nlatest evaluation: aggregate CER {100 * last['aggregate_cer']:.1f}%\n"
        result["aggregate_cer"] = last["aggregate_cer"]
    _emit(ctx, result, human)


@main.command()
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@click.pass_context
@guarded
def export(ctx, out_path):
    """Export the validated manifest (checks that recordings exist)."""
    project = _project(ctx)
    data = export_manifest(project.load_manifest(), recordings_root=project.recordings_dir)
    if out_path:
        Path(out_path).write_bytes(data)
        _emit(ctx, {"out": str(out_path)}, f"manifest exported to {out_path}")
    else:
        click.echo(data.decode("utf-8"), nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8571, show_default=True)
@click.option("--static", "static_dir", type=click.Path(path_type=Path), default=None,
              help="Directory of built browser-client files to serve at /.")
@click.pass_context
@guarded
def serve(ctx, host: str, port: int, static_dir):
    """Run the speech-collection web service."""
    import uvicorn

    from .service import create_app

    project = _project(ctx)
    app = create_app(project, static_dir=Path(static_dir) if static_dir else None)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
