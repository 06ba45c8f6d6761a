"""Desk-scale acoustic model: log-mel front end, encoder and context
convolutions, affine head, trained from scratch with CTC.

The network keeps the classic self-supervised-ASR decomposition — an
encoder producing per-frame latents, a context stage mixing a window of
latents into contextualized vectors, and a dense head emitting a
character distribution — but at a size trainable on minutes of audio.
Each stage can be frozen independently, so head-only fine-tuning on top
of fixed lower stages behaves exactly like the large-model workflow.

All gradient math is analytic and verified against finite differences;
weights are float32, computation float64.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugmentSpec, expand
from .corpus import SAMPLE_RATE, AudioClip, Manifest
from .ctc import LogProbMatrix, Vocab, collapse, collapse_path, ctc_grad, ctc_nll
from .errors import EmptyDataError, InfeasibleTargetError, ModelFormatError, ValidationError
from .metrics import edit_distance

MODEL_MAGIC = b"NLR1"


# --- features ----------------------------------------------------------------

@dataclass(frozen=True)
class FeatureSpec:
    window_ms: int = 25
    hop_ms: int = 10
    mel_bins: int = 40
    fft_size: int = 512
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.window_ms < self.hop_ms:
            raise ValidationError("feature window must be >= hop")
        if self.mel_bins > self.fft_size // 2:
            raise ValidationError("mel_bins must be <= fft_size/2")

    @property
    def window_samples(self) -> int:
        return self.window_ms * SAMPLE_RATE // 1000

    @property
    def hop_samples(self) -> int:
        return self.hop_ms * SAMPLE_RATE // 1000


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_freqs(spec: FeatureSpec, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Hz center of each triangular mel filter."""
    mels = np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2), spec.mel_bins + 2)
    return _mel_to_hz(mels)[1:-1]


def mel_filterbank(spec: FeatureSpec, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """(mel_bins, fft_size//2 + 1) triangular filters, mel-spaced corners."""
    n_bins = spec.fft_size // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / spec.fft_size
    mels = np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2), spec.mel_bins + 2)
    corners = _mel_to_hz(mels)
    fb = np.zeros((spec.mel_bins, n_bins))
    for j in range(spec.mel_bins):
        left, center, right = corners[j], corners[j + 1], corners[j + 2]
        rising = (freqs - left) / max(center - left, 1e-9)
        falling = (right - freqs) / max(right - center, 1e-9)
        fb[j] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return fb


def extract_features(clip: AudioClip, spec: FeatureSpec) -> np.ndarray:
    """Log-mel energies, one row per frame: 1 + floor((N - window)/hop) rows."""
    win = spec.window_samples
    hop = spec.hop_samples
    x = clip.samples
    if len(x) < win:
        raise EmptyDataError(
            f"clip of {len(x)} samples is shorter than one {win}-sample window"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop]
    spectrum = np.abs(np.fft.rfft(frames * np.hanning(win), n=spec.fft_size)) ** 2
    mel = spectrum @ mel_filterbank(spec).T
    return np.log(mel + spec.log_floor)


# --- model -------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    u: int = 5              # encoder receptive width, in feature frames
    v: int = 9              # context receptive width, in latent frames
    enc_channels: int = 64
    ctx_channels: int = 64
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)

    def __post_init__(self):
        if self.u < 1 or self.v < 1 or self.enc_channels < 1 or self.ctx_channels < 1:
            raise ValidationError("model dimensions must be positive")


PARAM_GROUPS = ("enc_w", "enc_b", "ctx_w", "ctx_b", "head_w", "head_b")


@dataclass
class AcousticModel:
    spec: ModelSpec
    vocab: Vocab
    enc_w: np.ndarray   # (enc_channels, mel_bins, u)
    enc_b: np.ndarray   # (enc_channels,)
    ctx_w: np.ndarray   # (ctx_channels, enc_channels, v)
    ctx_b: np.ndarray   # (ctx_channels,)
    head_w: np.ndarray  # (V, ctx_channels)
    head_b: np.ndarray  # (V,)

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_GROUPS}

    def copy(self) -> "AcousticModel":
        return AcousticModel(
            self.spec, self.vocab,
            **{name: getattr(self, name).copy() for name in PARAM_GROUPS},
        )


def init_model(spec: ModelSpec, vocab: Vocab, seed: int) -> AcousticModel:
    """He-normal weights scaled by fan-in, zero biases, float32."""
    rng = np.random.default_rng(seed)

    def he(shape, fan_in):
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)

    mel = spec.feature_spec.mel_bins
    v_size = len(vocab)
    return AcousticModel(
        spec=spec,
        vocab=vocab,
        enc_w=he((spec.enc_channels, mel, spec.u), mel * spec.u),
        enc_b=np.zeros(spec.enc_channels, dtype=np.float32),
        ctx_w=he((spec.ctx_channels, spec.enc_channels, spec.v), spec.enc_channels * spec.v),
        ctx_b=np.zeros(spec.ctx_channels, dtype=np.float32),
        head_w=he((v_size, spec.ctx_channels), spec.ctx_channels),
        head_b=np.zeros(v_size, dtype=np.float32),
    )


def _conv_windows(x: np.ndarray, k: int, pad_value: float) -> np.ndarray:
    """Same-padded sliding windows of a (T, C) sequence: (T, C, k)."""
    left, right = (k - 1) // 2, k // 2
    xpad = np.pad(x, ((left, right), (0, 0)), constant_values=pad_value)
    return np.lib.stride_tricks.sliding_window_view(xpad, k, axis=0)


def _conv_forward(x, w, b, pad_value):
    win = _conv_windows(x, w.shape[2], pad_value)
    return np.einsum("tck,ock->to", win, w, optimize=True) + b, win


def _conv_backward(d_out, win, w, t_len):
    k = w.shape[2]
    left = (k - 1) // 2
    dw = np.einsum("to,tck->ock", d_out, win, optimize=True)
    db = d_out.sum(axis=0)
    dwin = np.einsum("to,ock->tck", d_out, w, optimize=True)
    dxpad = np.zeros((t_len + k - 1, w.shape[1]))
    for j in range(k):
        dxpad[j:j + t_len] += dwin[:, :, j]
    return dw, db, dxpad[left:left + t_len]


def _forward_features(model: AcousticModel, feats: np.ndarray):
    """Run features through encoder, context, and head; return intermediates."""
    spec = model.spec
    silence = np.log(spec.feature_spec.log_floor)
    z_pre, enc_win = _conv_forward(
        feats, model.enc_w.astype(np.float64), model.enc_b.astype(np.float64), silence
    )
    z = np.maximum(z_pre, 0.0)
    c_pre, ctx_win = _conv_forward(
        z, model.ctx_w.astype(np.float64), model.ctx_b.astype(np.float64), 0.0
    )
    c = np.maximum(c_pre, 0.0)
    logits = c @ model.head_w.astype(np.float64).T + model.head_b.astype(np.float64)
    return {
        "feats": feats, "enc_win": enc_win, "z_pre": z_pre, "z": z,
        "ctx_win": ctx_win, "c_pre": c_pre, "c": c, "logits": logits,
    }


def forward(model: AcousticModel, clip: AudioClip) -> LogProbMatrix:
    """Per-frame character log-probabilities for a clip; one row per feature
    frame, rows normalized."""
    feats = extract_features(clip, model.spec.feature_spec)
    cache = _forward_features(model, feats)
    return LogProbMatrix.from_logits(cache["logits"])


@dataclass
class ModelGrads:
    loss: float
    grads: dict[str, np.ndarray]
    skipped: bool = False
    frozen: tuple[str, ...] = ()


def _grads_from_cache(model: AcousticModel, cache: dict, target: list[int]) -> ModelGrads:
    lp = LogProbMatrix.from_logits(cache["logits"])
    try:
        d_logits = ctc_grad(lp, target)
    except InfeasibleTargetError:
        zeros = {name: np.zeros_like(getattr(model, name), dtype=np.float64)
                 for name in PARAM_GROUPS}
        return ModelGrads(loss=float("inf"), grads=zeros, skipped=True)
    loss = ctc_nll(lp, target)
    c = cache["c"]
    head_w = model.head_w.astype(np.float64)
    d_head_w = d_logits.T @ c
    d_head_b = d_logits.sum(axis=0)
    d_c = d_logits @ head_w
    d_c_pre = d_c * (cache["c_pre"] > 0.0)
    d_ctx_w, d_ctx_b, d_z = _conv_backward(
        d_c_pre, cache["ctx_win"], model.ctx_w.astype(np.float64), len(c)
    )
    d_z_pre = d_z * (cache["z_pre"] > 0.0)
    d_enc_w, d_enc_b, _ = _conv_backward(
        d_z_pre, cache["enc_win"], model.enc_w.astype(np.float64), len(c)
    )
    return ModelGrads(loss=float(loss), grads={
        "enc_w": d_enc_w, "enc_b": d_enc_b,
        "ctx_w": d_ctx_w, "ctx_b": d_ctx_b,
        "head_w": d_head_w, "head_b": d_head_b,
    })


def model_grad(
    model: AcousticModel,
    clip: AudioClip,
    target: list[int],
    freeze_encoder: bool = False,
    freeze_context: bool = False,
) -> ModelGrads:
    """Loss and analytic gradients for one utterance.

    Frozen stages are still differentiated (the numbers are useful for
    diagnostics) but flagged so the optimizer skips them.  An infeasible
    target yields +inf loss, zero gradients, and the skip flag instead of
    an exception.
    """
    feats = extract_features(clip, model.spec.feature_spec)
    out = _grads_from_cache(model, _forward_features(model, feats), target)
    frozen = []
    if freeze_encoder:
        frozen += ["enc_w", "enc_b"]
    if freeze_context:
        frozen += ["ctx_w", "ctx_b"]
    out.frozen = tuple(frozen)
    return out


# --- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    epochs: int = 50
    batch_size: int = 8
    seed: int = 0
    freeze_encoder: bool = False
    freeze_context: bool = False
    augment: AugmentSpec | None = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 5.0
    model: ModelSpec = field(default_factory=ModelSpec)
    stop_at_train_cer: float | None = None

    def __post_init__(self):
        # learning_rate 0 is allowed as a no-learning control for sweeps
        if self.learning_rate < 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValidationError("learning rate must be >= 0; epochs and batch size positive")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_cer: float
    skipped: int


def _adam_step(params, grads, state, config: TrainConfig, frozen: set[str]):
    names = [n for n in PARAM_GROUPS if n not in frozen]
    norm = np.sqrt(sum(float((grads[n] ** 2).sum()) for n in names))
    scale = 1.0
    if config.grad_clip_norm and norm > config.grad_clip_norm:
        scale = config.grad_clip_norm / norm
    state["t"] += 1
    t = state["t"]
    b1, b2 = config.adam_beta1, config.adam_beta2
    for n in names:
        g = grads[n] * scale
        state["m"][n] = b1 * state["m"][n] + (1 - b1) * g
        state["v"][n] = b2 * state["v"][n] + (1 - b2) * g * g
        m_hat = state["m"][n] / (1 - b1 ** t)
        v_hat = state["v"][n] / (1 - b2 ** t)
        params[n] -= (config.learning_rate * m_hat /
                      (np.sqrt(v_hat) + config.adam_eps)).astype(np.float32)


def train(
    manifest: Manifest,
    vocab: Vocab,
    config: TrainConfig,
    audio_provider,
) -> tuple[AcousticModel, list[EpochStats]]:
    """Train on the manifest's train split; returns the best-loss model and
    per-epoch history.

    ``audio_provider`` maps a Segment to its AudioClip.  Augmentation (if
    configured) is expanded once up front; it is deterministic, so the
    effective dataset is a pure function of (manifest, config).
    """
    segments = manifest.split_of("train")
    if not segments:
        raise EmptyDataError("manifest has no train segments")
    items = [(audio_provider(s), s.transcript) for s in segments]
    if config.augment is not None:
        items = expand(items, config.augment)
    feats = [extract_features(clip, config.model.feature_spec) for clip, _ in items]
    targets = [vocab.encode(text) for _, text in items]

    def feasible(f, t):
        repeats = sum(a == b for a, b in zip(t, t[1:]))
        return len(f) >= len(t) + repeats

    if not any(feasible(f, t) for f, t in zip(feats, targets)):
        raise EmptyDataError("every training target is infeasible for its clip")

    model = init_model(config.model, vocab, config.seed)
    params = model.params()
    state = {
        "t": 0,
        "m": {n: np.zeros(p.shape) for n, p in params.items()},
        "v": {n: np.zeros(p.shape) for n, p in params.items()},
    }
    frozen: set[str] = set()
    if config.freeze_encoder:
        frozen |= {"enc_w", "enc_b"}
    if config.freeze_context:
        frozen |= {"ctx_w", "ctx_b"}

    rng = np.random.default_rng(config.seed + 1)
    history: list[EpochStats] = []
    best_loss = float("inf")
    best_params = {n: p.copy() for n, p in params.items()}
    for epoch in range(config.epochs):
        order = rng.permutation(len(items))
        losses = []
        edits = 0
        ref_len = 0
        skipped = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc = {n: np.zeros(p.shape) for n, p in params.items()}
            any_ok = False
            for idx in batch:
                cache = _forward_features(model, feats[idx])
                out = _grads_from_cache(model, cache, targets[idx])
                if out.skipped:
                    skipped += 1
                    continue
                any_ok = True
                losses.append(out.loss)
                for n in PARAM_GROUPS:
                    acc[n] += out.grads[n]
                # running CER from the forward pass already in hand
                path = np.argmax(cache["logits"], axis=1).tolist()
                edits += edit_distance(collapse_path(path), targets[idx])
                ref_len += max(len(targets[idx]), 1)
            if any_ok:
                _adam_step(params, acc, state, config, frozen)
        mean_loss = float(np.mean(losses)) if losses else float("inf")
        cer = edits / ref_len if ref_len else 1.0
        history.append(EpochStats(epoch=epoch, loss=mean_loss, train_cer=cer, skipped=skipped))
        if mean_loss < best_loss:
            best_loss = mean_loss
            best_params = {n: p.copy() for n, p in params.items()}
        if config.stop_at_train_cer is not None and cer <= config.stop_at_train_cer:
            break
    return replace(model, **best_params), history


@dataclass
class SweepResult:
    config: TrainConfig
    test_cer: float
    history: list[EpochStats]
    model: AcousticModel


def sweep(
    manifest: Manifest,
    vocab: Vocab,
    configs: list[TrainConfig],
    audio_provider,
) -> list[SweepResult]:
    """Train every config and rank by held-out (test split) CER, best first."""
    if not configs:
        raise ValidationError("sweep needs at least one config")
    test_segments = manifest.split_of("test")
    if not test_segments:
        raise EmptyDataError("manifest has no test segments to rank on")
    results = []
    for config in configs:
        model, history = train(manifest, vocab, config, audio_provider)
        edits = 0
        ref_len = 0
        for seg in test_segments:
            lp = forward(model, audio_provider(seg))
            hyp = collapse_path(np.argmax(lp.values, axis=1).tolist())
            ref = vocab.encode(seg.transcript)
            edits += edit_distance(hyp, ref)
            ref_len += len(ref)
        results.append(SweepResult(
            config=config,
            test_cer=edits / ref_len if ref_len else 1.0,
            history=history,
            model=model,
        ))
    results.sort(key=lambda r: r.test_cer)
    return results


def greedy_text(lp: LogProbMatrix, vocab: Vocab) -> str:
    path = np.argmax(lp.values, axis=1).tolist()
    return collapse(path, vocab)


# --- serialization -----------------------------------------------------------

def save_model(model: AcousticModel) -> bytes:
    """Magic, JSON header (feature spec, widths, channels, vocab), then the
    parameter arrays as little-endian float32 in declaration order."""
    fs = model.spec.feature_spec
    header = json.dumps({
        "feature_spec": {
            "window_ms": fs.window_ms, "hop_ms": fs.hop_ms,
            "mel_bins": fs.mel_bins, "fft_size": fs.fft_size,
            "log_floor": fs.log_floor,
        },
        "u": model.spec.u, "v": model.spec.v,
        "enc_channels": model.spec.enc_channels,
        "ctx_channels": model.spec.ctx_channels,
        "vocab": list(model.vocab.symbols),
    }).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    for name in PARAM_GROUPS:
        buf.write(np.ascontiguousarray(getattr(model, name), dtype="<f4").tobytes())
    return buf.getvalue()


def load_model(data: bytes) -> AcousticModel:
    if data[:4] != MODEL_MAGIC:
        raise ModelFormatError("bad magic bytes: not a model file")
    if len(data) < 8:
        raise ModelFormatError("truncated file")
    (header_len,) = struct.unpack("<I", data[4:8])
    header_end = 8 + header_len
    if len(data) < header_end:
        raise ModelFormatError("truncated header")
    try:
        header = json.loads(data[8:header_end].decode("utf-8"))
        fs = FeatureSpec(**header["feature_spec"])
        spec = ModelSpec(
            u=header["u"], v=header["v"],
            enc_channels=header["enc_channels"],
            ctx_channels=header["ctx_channels"],
            feature_spec=fs,
        )
        vocab = Vocab(tuple(header["vocab"]))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"invalid header: {e}") from None
    shapes = {
        "enc_w": (spec.enc_channels, fs.mel_bins, spec.u),
        "enc_b": (spec.enc_channels,),
        "ctx_w": (spec.ctx_channels, spec.enc_channels, spec.v),
        "ctx_b": (spec.ctx_channels,),
        "head_w": (len(vocab), spec.ctx_channels),
        "head_b": (len(vocab),),
    }
    expected = sum(int(np.prod(s)) for s in shapes.values()) * 4
    body = data[header_end:]
    if len(body) != expected:
        raise ModelFormatError(
            f"parameter bytes do not match header shapes: got {len(body)}, expected {expected}"
        )
    arrays = {}
    pos = 0
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(
            body, dtype="<f4", count=count, offset=pos
        ).reshape(shape).copy()
        pos += count * 4
    return AcousticModel(spec=spec, vocab=vocab, **arrays)
