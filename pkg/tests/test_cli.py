import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from filelock import FileLock

from fieldasr.cli import format_cuts_file, main, parse_cuts_file, plan_chunks
from fieldasr.corpus import AudioClip, import_manifest, write_wav
from fieldasr.errors import EmptyDataError, ValidationError
from helpers import tone
from synthlang import ORTH_CONFIG, random_transcript, synth_utterance

PROJECT_YAML = """\
orthography: orthography.tsv
train:
  learning_rate: 0.003
  epochs: {epochs}
  batch_size: 8
  use_augment: false
model:
  enc_channels: 16
  ctx_channels: 16
chunking:
  window_s: 15.0
  overlap_s: 2.0
"""


@pytest.fixture
def project(tmp_path):
    (tmp_path / "orthography.tsv").write_text(ORTH_CONFIG, encoding="utf-8")
    (tmp_path / "project.yaml").write_text(PROJECT_YAML.format(epochs=8), encoding="utf-8")
    return tmp_path


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, project, *args):
    return runner.invoke(main, ["--config", str(project / "project.yaml"), *args])


def make_recording(project, name, texts, seed=0):
    """A multi-utterance WAV plus its cut file; returns (wav_path, cuts_path)."""
    clips = [synth_utterance(t, seed=seed + i) for i, t in enumerate(texts)]
    samples = np.concatenate([c.samples for c in clips])
    wav_path = project / f"{name}.wav"
    wav_path.write_bytes(write_wav(AudioClip(samples)))
    rows, pos = [], 0.0
    for clip, text in zip(clips, texts):
        rows.append((pos, pos + clip.duration_s, text))
        pos += clip.duration_s
    cuts_path = project / f"{name}.cuts.tsv"
    cuts_path.write_text(format_cuts_file(rows), encoding="utf-8")
    return wav_path, cuts_path


class TestChunking:
    def test_forty_second_boundaries(self):
        assert plan_chunks(40.0, 15.0, 2.0) == [(0.0, 15.0), (13.0, 28.0), (26.0, 40.0)]

    def test_short_clip_single_chunk(self):
        assert plan_chunks(10.0, 15.0, 2.0) == [(0.0, 10.0)]

    def test_empty(self):
        with pytest.raises(EmptyDataError):
            plan_chunks(0.0, 15.0, 2.0)

    @pytest.mark.parametrize("duration", [3.7, 15.0, 16.2, 29.0, 61.3])
    def test_full_coverage_with_overlap(self, duration):
        chunks = plan_chunks(duration, 15.0, 2.0)
        assert chunks[0][0] == 0.0
        assert chunks[-1][1] == pytest.approx(duration)
        for (s1, e1), (s2, e2) in zip(chunks, chunks[1:]):
            assert s2 == pytest.approx(e1 - 2.0)  # configured overlap
            assert s2 < e1  # no audio skipped


class TestCutsFile:
    def test_roundtrip(self):
        rows = [(0.0, 1.5, "ab"), (1.5, 3.0, "a=b š")]
        assert parse_cuts_file(format_cuts_file(rows)) == rows

    def test_bad_line(self):
        with pytest.raises(ValidationError, match="line 1"):
            parse_cuts_file("nonsense\n")

    def test_bad_timestamp(self):
        with pytest.raises(ValidationError, match="bad timestamps"):
            parse_cuts_file("x\t1.0\tab\n")


class TestIngest:
    def test_grows_manifest(self, runner, project):
        wav, cuts = make_recording(project, "rec0", ["ai ke", "tit"])
        result = invoke(runner, project, "ingest", str(wav), str(cuts))
        assert result.exit_code == 0, result.output
        manifest = import_manifest((project / "manifest.jsonl").read_bytes())
        assert len(manifest.segments) == 2
        assert (project / "recordings" / "rec0.wav").exists()

    def test_invalid_cut_leaves_manifest_unchanged(self, runner, project):
        wav, cuts = make_recording(project, "rec0", ["ai ke"])
        assert invoke(runner, project, "ingest", str(wav), str(cuts)).exit_code == 0
        before = (project / "manifest.jsonl").read_bytes()

        wav2, _ = make_recording(project, "rec1", ["tit"])
        (project / "bad.tsv").write_text("0.0\t16.5\ttit\n", encoding="utf-8")
        result = invoke(runner, project, "ingest", str(wav2), str(project / "bad.tsv"))
        assert result.exit_code == 1
        assert (project / "manifest.jsonl").read_bytes() == before

    def test_repeated_id_rejected(self, runner, project):
        wav, cuts = make_recording(project, "rec0", ["ai"])
        assert invoke(runner, project, "ingest", str(wav), str(cuts)).exit_code == 0
        result = invoke(runner, project, "ingest", str(wav), str(cuts))
        assert result.exit_code == 1
        assert "duplicate" in result.output

    def test_bad_transcript_rejected(self, runner, project):
        wav, _ = make_recording(project, "rec0", ["ai"])
        (project / "bad.tsv").write_text("0.0\t1.0\tQQQ\n", encoding="utf-8")
        result = invoke(runner, project, "ingest", str(wav), str(project / "bad.tsv"))
        assert result.exit_code == 1
        assert not (project / "manifest.jsonl").exists()


def train_fixture(runner, project, n=6, epochs=None, seed=0):
    texts = [random_transcript(np.random.default_rng(seed + i)) for i in range(n)]
    wav, cuts = make_recording(project, "base", texts, seed=seed)
    r = invoke(runner, project, "ingest", str(wav), str(cuts))
    assert r.exit_code == 0, r.output
    args = ["--json", "train", "--split", "0.7"]
    if epochs:
        args += ["--epochs", str(epochs)]
    return invoke(runner, project, *args)


class TestTrain:
    def test_trains_and_reports(self, runner, project):
        result = train_fixture(runner, project)
        assert result.exit_code == 0, result.output
        rec = json.loads(result.output)
        assert Path(rec["model"]).exists()
        assert "test_cer" in rec
        assert (project / "reports" / "history.jsonl").exists()
        assert (project / "reports" / "history.png").exists()

    def test_missing_manifest(self, runner, project):
        result = invoke(runner, project, "train")
        assert result.exit_code == 3

    def test_deterministic_reruns(self, runner, project):
        r1 = train_fixture(runner, project, epochs=3)
        model1 = (project / "models" / "model.nlr").read_bytes()
        hist1 = (project / "reports" / "history.jsonl").read_text()
        r2 = invoke(runner, project, "--json", "train", "--epochs", "3")
        assert r1.exit_code == r2.exit_code == 0
        assert (project / "models" / "model.nlr").read_bytes() == model1
        assert (project / "reports" / "history.jsonl").read_text() == hist1


class TestTranscribe:
    def test_single_chunk_line(self, runner, project):
        assert train_fixture(runner, project, epochs=2).exit_code == 0
        clip = synth_utterance("ai ke", seed=77)
        (project / "new.wav").write_bytes(write_wav(clip))
        result = invoke(runner, project, "transcribe", str(project / "new.wav"))
        assert result.exit_code == 0, result.output
        lines = (project / "new.draft.tsv").read_text().splitlines()
        assert len(lines) == 1

    def test_long_audio_three_tiled_regions(self, runner, project):
        assert train_fixture(runner, project, epochs=2).exit_code == 0
        base = synth_utterance("ai ke tit", seed=3).samples
        reps = int(np.ceil(40 * 16000 / len(base)))
        samples = np.tile(base, reps)[: 40 * 16000]
        (project / "long.wav").write_bytes(write_wav(AudioClip(samples)))
        result = invoke(runner, project, "transcribe", str(project / "long.wav"))
        assert result.exit_code == 0, result.output
        rows = parse_cuts_file((project / "long.draft.tsv").read_text())
        spans = [(s, e) for s, e, _ in rows]
        assert spans == [(0.0, 14.0), (14.0, 27.0), (27.0, 40.0)]

    def test_missing_model(self, runner, project):
        (project / "x.wav").write_bytes(write_wav(AudioClip(tone(440, 1.0))))
        result = invoke(runner, project, "transcribe", str(project / "x.wav"))
        assert result.exit_code == 2

    def test_empty_audio(self, runner, project):
        assert train_fixture(runner, project, epochs=2).exit_code == 0
        (project / "tiny.wav").write_bytes(write_wav(AudioClip(np.zeros(10))))
        result = invoke(runner, project, "transcribe", str(project / "tiny.wav"))
        assert result.exit_code == 3


class TestAccept:
    def test_zero_edit_draft_records_zero_cer(self, runner, project):
        assert train_fixture(runner, project, epochs=2).exit_code == 0
        clip = synth_utterance("ai ke", seed=9)
        (project / "new.wav").write_bytes(write_wav(clip))
        assert invoke(runner, project, "transcribe", str(project / "new.wav")).exit_code == 0
        # "correct" the draft by accepting it verbatim
        draft = (project / "new.draft.tsv").read_text()
        (project / "new.final.tsv").write_text(draft, encoding="utf-8")
        result = invoke(runner, project, "--json", "accept", str(project / "new.wav"),
                        str(project / "new.final.tsv"))
        if json.loads(result.output).get("draft_cer") is not None:
            assert json.loads(result.output)["draft_cer"] == 0.0

    def test_draft_cer_fraction(self, runner, project):
        assert train_fixture(runner, project, epochs=2).exit_code == 0
        clip = synth_utterance("aaaaaaaaai", seed=10)
        (project / "n.wav").write_bytes(write_wav(clip))
        # hand-made draft differing in 1 of 10 graphemes
        (project / "n.draft.tsv").write_text(
            format_cuts_file([(0.0, clip.duration_s, "aaaaaaaaaa")]), encoding="utf-8")
        (project / "n.final.tsv").write_text(
            format_cuts_file([(0.0, clip.duration_s, "aaaaaaaaai")]), encoding="utf-8")
        result = invoke(runner, project, "--json", "accept", str(project / "n.wav"),
                        str(project / "n.final.tsv"))
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["draft_cer"] == pytest.approx(0.1)

    def test_malformed_transcript_writes_nothing(self, runner, project):
        assert train_fixture(runner, project, epochs=2).exit_code == 0
        before = (project / "manifest.jsonl").read_bytes()
        clip = synth_utterance("ai", seed=11)
        (project / "n.wav").write_bytes(write_wav(clip))
        (project / "n.final.tsv").write_text("0.0\t0.5\tBADQ\n", encoding="utf-8")
        result = invoke(runner, project, "accept", str(project / "n.wav"),
                        str(project / "n.final.tsv"))
        assert result.exit_code == 1
        assert (project / "manifest.jsonl").read_bytes() == before
        assert not (project / "recordings" / "n.wav").exists()

    def test_timing_recorded(self, runner, project):
        assert train_fixture(runner, project, epochs=2).exit_code == 0
        clip = synth_utterance("ai ke", seed=12)
        (project / "n.wav").write_bytes(write_wav(clip))
        (project / "n.final.tsv").write_text(
            format_cuts_file([(0.0, clip.duration_s, "ai ke")]), encoding="utf-8")
        result = invoke(runner, project, "accept", str(project / "n.wav"),
                        str(project / "n.final.tsv"),
                        "--minutes-with", "2", "--minutes-without", "5")
        assert result.exit_code == 0, result.output
        rec = json.loads((project / "reports" / "speedups.jsonl").read_text().splitlines()[0])
        assert rec["speedup"] == pytest.approx(2.5)


class TestReport:
    def test_no_data(self, runner, project):
        result = invoke(runner, project, "report")
        assert result.exit_code == 0
        assert "no data" in result.output

    def test_published_five_minute_row(self, runner, project, tmp_path):
        from fieldasr.metrics import SpeedupEntry, speedup_jsonl

        entries = [SpeedupEntry("five-minute", 300.0, 132 * 60.0, 21 * 60.0, 0.008, 0.021)]
        f = tmp_path / "speedups.jsonl"
        f.write_text(speedup_jsonl(entries), encoding="utf-8")
        result = invoke(runner, project, "report", "--speedups", str(f))
        assert result.exit_code == 0, result.output
        assert "6.3×" in result.output
        assert (project / "reports" / "speedup.png").exists()
        assert (project / "reports" / "speedup_report.jsonl").exists()

    def test_stable_across_reruns(self, runner, project, tmp_path):
        from fieldasr.metrics import SpeedupEntry, speedup_jsonl

        f = tmp_path / "speedups.jsonl"
        f.write_text(speedup_jsonl([SpeedupEntry("x", 60.0, 1500.0, 420.0)]),
                     encoding="utf-8")
        out1 = invoke(runner, project, "report", "--speedups", str(f)).output
        out2 = invoke(runner, project, "report", "--speedups", str(f)).output
        assert out1 == out2


class TestExportAndLock:
    def test_export_checks_recordings(self, runner, project):
        assert train_fixture(runner, project, epochs=2).exit_code == 0
        assert invoke(runner, project, "export").exit_code == 0
        (project / "recordings" / "base.wav").unlink()
        result = invoke(runner, project, "export")
        assert result.exit_code == 1
        assert "missing recordings" in result.output

    def test_concurrent_invocation_rejected(self, runner, project):
        wav, cuts = make_recording(project, "rec0", ["ai"])
        with FileLock(project / ".fieldasr.lock"):
            result = invoke(runner, project, "ingest", str(wav), str(cuts))
        assert result.exit_code == 2
        assert "lock" in result.output

    def test_eval_missing_model(self, runner, project):
        result = invoke(runner, project, "eval")
        assert result.exit_code == 2
