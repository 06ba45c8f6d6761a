"""Acceptance suite: every release criterion, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s``.  The slow criteria
(exhaustive edit-distance sweep, desk-scale training) run in minutes;
each timed criterion asserts its own budget.
"""
import contextlib
import itertools
import json
import math
import sys
import time

import numpy as np
import pytest
from click.testing import CliRunner

from fieldasr import acoustic as ac
from fieldasr.augment import AugmentSpec, add_noise, pitch_shift, speed_perturb, time_stretch
from fieldasr.cli import format_cuts_file, main
from fieldasr.corpus import (
    AudioClip,
    Manifest,
    Segment,
    export_manifest,
    import_manifest,
    segment_recording,
    write_wav,
)
from fieldasr.ctc import BLANK, LogProbMatrix, Vocab, brute_force_nll, ctc_grad, ctc_nll
from fieldasr.errors import ValidationError
from fieldasr.metrics import SpeedupEntry, edit_distance, evaluate, format_speedup
from fieldasr.orthography import build_vocab
from helpers import correlation, peak_freq, tone, wav_bytes
from synthlang import ORTH, ORTH_CONFIG, make_corpus, provider_for, synth_utterance


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL")
        raise
    print(f"\nACCEPTANCE {name}: PASS")


def random_lp(rng, T, V):
    return LogProbMatrix.from_logits(rng.normal(size=(T, V)))


def test_ctc_correctness_against_exhaustive_oracle():
    with criterion("CTC correctness"):
        start = time.monotonic()
        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 1000:
            T = int(rng.integers(1, 5))
            V = int(rng.integers(2, 4))
            L = int(rng.integers(0, 4))
            target = list(rng.integers(1, V, size=L))
            lp = random_lp(rng, T, V)
            a = ctc_nll(lp, target)
            b = brute_force_nll(lp, target)
            if math.isinf(a) or math.isinf(b):
                assert math.isinf(a) and math.isinf(b)
            else:
                assert abs(a - b) < 1e-9
            checked += 1

        # completeness: the labels partition the path space
        for seed in range(5):
            lp = random_lp(np.random.default_rng(seed), 4, 3)
            total = 0.0
            for L in range(0, 5):
                for target in itertools.product([1, 2], repeat=L):
                    nll = ctc_nll(lp, list(target))
                    if math.isfinite(nll):
                        total += math.exp(-nll)
            assert abs(total - 1.0) < 1e-6
        elapsed = time.monotonic() - start
        assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_gradient_correctness_finite_differences():
    with criterion("Gradient correctness"):
        start = time.monotonic()
        rng = np.random.default_rng(77)

        # loss gradient on 20 random tiny instances, every entry
        h = 1e-5
        for _ in range(20):
            T = int(rng.integers(1, 5))
            V = int(rng.integers(2, 4))
            logits = rng.normal(size=(T, V))
            L = int(rng.integers(0, min(T, 3) + 1))
            target = list(rng.integers(1, V, size=L))
            lp = LogProbMatrix.from_logits(logits)
            if not math.isfinite(ctc_nll(lp, target)):
                continue
            g = ctc_grad(lp, target)
            for i in range(T):
                for j in range(V):
                    up, down = logits.copy(), logits.copy()
                    up[i, j] += h
                    down[i, j] -= h
                    fd = (ctc_nll(LogProbMatrix.from_logits(up), target)
                          - ctc_nll(LogProbMatrix.from_logits(down), target)) / (2 * h)
                    assert abs(fd - g[i, j]) < 1e-4 * max(1.0, abs(fd))

        # full-model gradients on 5 instances: every parameter of a tiny model
        fs = ac.FeatureSpec(mel_bins=8, fft_size=128)
        spec = ac.ModelSpec(u=3, v=3, enc_channels=8, ctx_channels=8, feature_spec=fs)
        vocab = Vocab((BLANK, "a", "b", "c"))
        for inst in range(5):
            model = ac.init_model(spec, vocab, seed=inst)
            clip = AudioClip(rng.uniform(-0.3, 0.3, size=4800))
            target = list(rng.integers(1, 4, size=int(rng.integers(1, 4))))
            out = ac.model_grad(model, clip, target)
            assert not out.skipped
            feats = ac.extract_features(clip, fs)
            m64 = ac.AcousticModel(model.spec, model.vocab, **{
                n: getattr(model, n).astype(np.float64) for n in ac.PARAM_GROUPS})

            def loss_of():
                cache = ac._forward_features(m64, feats)
                return ctc_nll(LogProbMatrix.from_logits(cache["logits"]), target)

            for name in ac.PARAM_GROUPS:
                flat = getattr(m64, name).reshape(-1)
                grad = out.grads[name].reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + h
                    up = loss_of()
                    flat[i] = orig - h
                    down = loss_of()
                    flat[i] = orig
                    fd = (up - down) / (2 * h)
                    assert abs(fd - grad[i]) < 1e-3 * max(1.0, abs(fd), abs(grad[i])), \
                        f"instance {inst} group {name} index {i}"
        elapsed = time.monotonic() - start
        assert elapsed < 120.0, f"took {elapsed:.1f}s"


OVERFIT_SPEC = ac.ModelSpec(u=5, v=9, enc_channels=32, ctx_channels=32)


def overfit_corpus():
    manifest, clips = make_corpus(5, 0, seed=7, n_words=(2, 3), word_len=(3, 5))
    for seg in manifest.segments:
        assert 1.0 <= seg.duration_s <= 3.0
    return manifest, provider_for(clips)


def test_overfit_sanity():
    with criterion("Overfit sanity"):
        start = time.monotonic()
        manifest, provider = overfit_corpus()
        vocab = build_vocab(ORTH)
        config = ac.TrainConfig(learning_rate=2e-3, epochs=200, batch_size=5,
                                seed=0, model=OVERFIT_SPEC)
        model, history = ac.train(manifest, vocab, config, provider)
        elapsed = time.monotonic() - start
        assert any(h.train_cer == 0.0 for h in history), \
            f"never reached CER 0 within {len(history)} epochs"
        assert elapsed < 300.0, f"took {elapsed:.1f}s"

        # loss is monotone non-increasing over 20-epoch windows
        losses = [h.loss for h in history]
        windows = [np.mean(losses[i:i + 20]) for i in range(0, len(losses) - 19, 20)]
        for a, b in zip(windows, windows[1:]):
            assert b <= a + 1e-9, f"window means rose: {a} -> {b}"

        # the returned best-loss model actually decodes the training set
        report = evaluate(model,
                          manifest.with_segments(
                              [seg.__class__(**{**seg.__dict__, "split": "test"})
                               for seg in manifest.segments]),
                          vocab, ORTH, provider)
        assert report.aggregate_cer == 0.0


def test_desk_scale_recognition():
    with criterion("Desk-scale recognition"):
        manifest, clips = make_corpus(40, 10, seed=11)
        provider = provider_for(clips)
        vocab = build_vocab(ORTH)
        config = ac.TrainConfig(
            learning_rate=2e-3, epochs=20, batch_size=8, seed=3,
            model=ac.ModelSpec(u=5, v=9, enc_channels=32, ctx_channels=32),
            augment=AugmentSpec(seed=3),
        )
        model, _ = ac.train(manifest, vocab, config, provider)
        report = evaluate(model, manifest, vocab, ORTH, provider)
        print(f"\n  held-out CER: {100 * report.aggregate_cer:.2f}%")
        assert report.aggregate_cer < 0.15


def test_edit_distance_oracle():
    with criterion("Edit-distance oracle"):
        sys.setrecursionlimit(100000)
        strings = [""]
        for l in range(1, 8):
            strings.extend("".join(p) for p in itertools.product("abc", repeat=l))
        n = len(strings)
        index = {s: i for i, s in enumerate(strings)}
        tail = [index[s[1:]] if s else -1 for s in strings]
        first = [s[0] if s else "" for s in strings]
        lengths = [len(s) for s in strings]
        memo = np.full((n, n), -1, dtype=np.int8)

        def oracle(i, j):
            v = memo[i, j]
            if v >= 0:
                return v
            if lengths[i] == 0:
                v = lengths[j]
            elif lengths[j] == 0:
                v = lengths[i]
            elif first[i] == first[j]:
                v = oracle(tail[i], tail[j])
            else:
                v = 1 + min(oracle(tail[i], j), oracle(i, tail[j]),
                            oracle(tail[i], tail[j]))
            memo[i, j] = v
            return v

        for i in range(n):
            for j in range(n):
                oracle(i, j)
        for i, a in enumerate(strings):
            row = memo[i]
            for j, b in enumerate(strings):
                assert edit_distance(a, b) == row[j], (a, b)

        # sampled longer pairs against a per-pair memoized recursion
        rng = np.random.default_rng(99)
        alphabet = "abcdef"

        def slow(a, b, cache):
            if (a, b) in cache:
                return cache[(a, b)]
            if not a:
                v = len(b)
            elif not b:
                v = len(a)
            elif a[0] == b[0]:
                v = slow(a[1:], b[1:], cache)
            else:
                v = 1 + min(slow(a[1:], b, cache), slow(a, b[1:], cache),
                            slow(a[1:], b[1:], cache))
            cache[(a, b)] = v
            return v

        for _ in range(10 ** 4):
            a = "".join(rng.choice(list(alphabet), size=rng.integers(8, 26)))
            b = "".join(rng.choice(list(alphabet), size=rng.integers(8, 26)))
            assert edit_distance(a, b) == slow(a, b, {})

        # metric properties on random strings
        for _ in range(2000):
            a = "".join(rng.choice(list(alphabet), size=rng.integers(0, 12)))
            b = "".join(rng.choice(list(alphabet), size=rng.integers(0, 12)))
            c = "".join(rng.choice(list(alphabet), size=rng.integers(0, 12)))
            assert edit_distance(a, b) == edit_distance(b, a)
            assert edit_distance(a, a) == 0
            assert (edit_distance(a, b) == 0) == (a == b)
            assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


def test_table4_arithmetic():
    # published rows: (length_s, without_s, with_s) -> printed speedup
    rows = [
        (15.0, 3 * 60.0, 89.0, "2.0×"),
        (60.0, 25 * 60.0, 7 * 60.0, "3.6×"),
        (180.0, 91 * 60.0, 17 * 60.0, "5.3×"),
        (300.0, 132 * 60.0, 21 * 60.0, "6.3×"),
    ]
    with criterion("Table 4 arithmetic"):
        mismatches = []
        for length, without, with_, expected in rows:
            entry = SpeedupEntry("row", length, without, with_)
            got = format_speedup(entry.speedup)
            if got != expected:
                mismatches.append(
                    f"{without / 60:g}min/{with_ / 60:g}min -> {got}, expected {expected} "
                    f"(exact ratio {entry.speedup:.4f})"
                )
        assert not mismatches, "; ".join(mismatches)


def test_corpus_integrity(tmp_path):
    with criterion("Corpus integrity"):
        # sample-exact reconstruction over random contiguous cut sets
        rng = np.random.default_rng(13)
        for _ in range(10):
            n_samples = int(rng.uniform(2.0, 30.0) * 16000)
            dur = n_samples / 16000.0
            clip = AudioClip(rng.uniform(-0.5, 0.5, size=n_samples))
            bounds = sorted(set(
                [0.0, dur] + list(rng.uniform(0.1, dur - 0.1, size=rng.integers(1, 5)))
            ))
            cuts, ok = [], True
            for s, e in zip(bounds, bounds[1:]):
                if e - s > 15.0:
                    ok = False
                cuts.append((s, e))
            if not ok:
                continue
            segs = segment_recording(clip, cuts, ["a"] * len(cuts), ORTH)
            rebuilt = np.concatenate(
                [clip.samples[s.start_sample:s.end_sample] for s in segs])
            assert np.array_equal(rebuilt, clip.samples)

        # manifest round-trip
        m = Manifest(orthography_name="synthetic", segments=[
            Segment(id=f"r{i}", source_recording="r.wav", start_sample=0,
                    end_sample=int(rng.integers(1, 240000)), transcript="ai ke",
                    split="train")
            for i in range(20)
        ])
        assert import_manifest(export_manifest(m)) == m

        # >15 s rejected at every entry point
        long_clip = AudioClip(tone(440, 16.0))
        with pytest.raises(ValidationError):
            segment_recording(long_clip, [(0.0, 16.0)], ["a"], ORTH)
        record = json.dumps({
            "id": "x", "source_recording": "r.wav", "start_sample": 0,
            "end_sample": 16 * 16000, "transcript": "a", "speaker_id": "s",
            "dialect": "d", "split": "train"})
        header = json.dumps({"orthography": "synthetic"})
        with pytest.raises(ValidationError):
            import_manifest(f"{header}\n{record}\n".encode())

        (tmp_path / "orthography.tsv").write_text(ORTH_CONFIG, encoding="utf-8")
        (tmp_path / "project.yaml").write_text("orthography: orthography.tsv\n",
                                               encoding="utf-8")
        (tmp_path / "long.wav").write_bytes(write_wav(long_clip))
        (tmp_path / "long.tsv").write_text("0.0\t16.0\ta\n", encoding="utf-8")
        runner = CliRunner()
        result = runner.invoke(main, ["--config", str(tmp_path / "project.yaml"),
                                      "ingest", str(tmp_path / "long.wav"),
                                      str(tmp_path / "long.tsv")])
        assert result.exit_code == 1
        assert not (tmp_path / "manifest.jsonl").exists()

        from fastapi.testclient import TestClient

        from fieldasr.project import load_project
        from fieldasr.service import create_app

        (tmp_path / "sentences.txt").write_text("ai ke\n", encoding="utf-8")
        (tmp_path / "project.yaml").write_text(
            "orthography: orthography.tsv\ncollect:\n  sentences: sentences.txt\n",
            encoding="utf-8")
        client = TestClient(create_app(load_project(tmp_path / "project.yaml")))
        client.post("/api/contributors", json={"id": "u1"})
        r = client.post(
            "/api/recordings",
            data={"sentence_id": "s00000", "contributor_id": "u1"},
            files={"audio": ("l.wav", wav_bytes(tone(440, 16.0), 16000), "audio/wav")})
        assert r.status_code == 413


def test_augmentation_contracts():
    with criterion("Augmentation contracts"):
        start = time.monotonic()
        clip = AudioClip(tone(440, 2.0))

        # identity at neutral parameters
        assert np.array_equal(speed_perturb(clip, 1.0).samples, clip.samples)
        assert correlation(pitch_shift(clip, 0.0).samples, clip.samples) > 0.99

        # tone-shift spectral checks at stated tolerances
        assert abs(peak_freq(speed_perturb(clip, 1.25).samples) - 550.0) <= 5.0
        st = time_stretch(clip, 1.5)
        assert abs(peak_freq(st.samples) - 440.0) <= 5.0
        assert abs(len(st.samples) - round(len(clip.samples) / 1.5)) <= 160
        up = pitch_shift(clip, 12.0)
        assert abs(peak_freq(up.samples) - 880.0) <= 8.8
        down = pitch_shift(AudioClip(tone(220, 2.0)), -12.0)
        assert abs(peak_freq(down.samples) - 110.0) <= 1.1

        # noise SNR and determinism
        noisy = add_noise(clip, 20.0, seed=5)
        resid = noisy.samples - clip.samples
        measured = 20 * np.log10(
            np.sqrt(np.mean(clip.samples ** 2)) / np.sqrt(np.mean(resid ** 2)))
        assert abs(measured - 20.0) <= 0.5
        assert np.array_equal(noisy.samples, add_noise(clip, 20.0, seed=5).samples)
        elapsed = time.monotonic() - start
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_loop_closure(tmp_path):
    with criterion("Loop closure"):
        from synthlang import random_transcript

        (tmp_path / "orthography.tsv").write_text(ORTH_CONFIG, encoding="utf-8")
        (tmp_path / "project.yaml").write_text("""\
orthography: orthography.tsv
train:
  learning_rate: 0.003
  epochs: 4
  batch_size: 8
  use_augment: false
model:
  enc_channels: 16
  ctx_channels: 16
""", encoding="utf-8")
        runner = CliRunner()

        def run(*args):
            r = runner.invoke(main, ["--config", str(tmp_path / "project.yaml"), *args])
            assert r.exit_code == 0, f"{args}: {r.output}"
            return r

        rng = np.random.default_rng(31)
        texts = [random_transcript(rng) for _ in range(8)]
        clips = [synth_utterance(t, seed=i) for i, t in enumerate(texts)]
        samples = np.concatenate([c.samples for c in clips])
        (tmp_path / "field.wav").write_bytes(write_wav(AudioClip(samples)))
        rows, pos = [], 0.0
        for c, t in zip(clips, texts):
            rows.append((pos, pos + c.duration_s, t))
            pos += c.duration_s
        (tmp_path / "field.tsv").write_text(format_cuts_file(rows), encoding="utf-8")

        run("ingest", str(tmp_path / "field.wav"), str(tmp_path / "field.tsv"))
        first = json.loads(run("--json", "train", "--split", "0.75").output)

        new_text = random_transcript(rng)
        new_clip = synth_utterance(new_text, seed=404)
        (tmp_path / "new.wav").write_bytes(write_wav(new_clip))
        run("transcribe", str(tmp_path / "new.wav"))
        assert (tmp_path / "new.draft.tsv").exists()
        (tmp_path / "new.final.tsv").write_text(
            format_cuts_file([(0.0, new_clip.duration_s, new_text)]), encoding="utf-8")
        run("accept", str(tmp_path / "new.wav"), str(tmp_path / "new.final.tsv"),
            "--minutes-with", "1", "--minutes-without", "3")

        second = json.loads(run("--json", "train").output)
        assert second["train_segments"] > first["train_segments"]
        run("report")
        run("export")
