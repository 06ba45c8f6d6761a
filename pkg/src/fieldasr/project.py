"""Project configuration: one YAML file tying together the orthography,
corpus paths, augmentation and training defaults, and the collection
service settings."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .acoustic import FeatureSpec, ModelSpec, TrainConfig
from .augment import AugmentSpec
from .corpus import MAX_SEGMENT_SECONDS, Manifest, export_manifest, import_manifest
from .errors import ConfigError
from .orthography import (
    Orthography,
    TransliterationScheme,
    builtin_schemes,
    load_orthography,
    load_scheme,
)


@dataclass
class ProjectConfig:
    root: Path
    orthography: Orthography
    schemes: dict[str, TransliterationScheme]
    recordings_dir: Path
    manifest_path: Path
    models_dir: Path
    reports_dir: Path
    augment_spec: AugmentSpec
    train_defaults: TrainConfig
    window_s: float = 15.0
    overlap_s: float = 2.0
    collect_storage: Path = Path("collect_data")
    sentences_file: Path | None = None
    token: str | None = None

    @property
    def lock_path(self) -> Path:
        return self.root / ".fieldasr.lock"

    @property
    def speedups_path(self) -> Path:
        return self.reports_dir / "speedups.jsonl"

    def load_manifest(self) -> Manifest:
        if not self.manifest_path.exists():
            return Manifest(orthography_name=self.orthography.name)
        return import_manifest(self.manifest_path.read_bytes())

    def save_manifest(self, manifest: Manifest) -> None:
        """Write-then-rename so a failed command never leaves a half-written
        manifest behind."""
        self.manifest_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.manifest_path.with_suffix(".tmp")
        tmp.write_bytes(export_manifest(manifest))
        os.replace(tmp, self.manifest_path)


def load_project(config_path: Path) -> ProjectConfig:
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"project config not found: {config_path}")
    raw = yaml.safe_load(config_path.read_text(encoding="utf-8")) or {}
    root = config_path.parent

    def resolve(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else root / p

    orth_path = resolve(raw.get("orthography", "orthography.tsv"))
    if not orth_path.exists():
        raise ConfigError(f"orthography file not found: {orth_path}")
    orth = load_orthography(orth_path.read_text(encoding="utf-8"), name=orth_path.stem)

    schemes = builtin_schemes(orth)
    for entry in raw.get("schemes", []) or []:
        scheme_path = resolve(entry)
        if not scheme_path.exists():
            raise ConfigError(f"scheme file not found: {scheme_path}")
        scheme = load_scheme(scheme_path.read_text(encoding="utf-8"), orth)
        schemes[scheme.name] = scheme

    paths = raw.get("paths", {}) or {}
    aug = raw.get("augment", {}) or {}
    augment_spec = AugmentSpec(
        speed_factors=tuple(aug.get("speed_factors", (0.9, 1.1))),
        pitch_semitones=tuple(aug.get("pitch_semitones", (-2.0, 2.0))),
        noise_snr_db=tuple(aug.get("noise_snr_db", (15.0, 25.0))),
        seed=int(aug.get("seed", 0)),
    )

    model_raw = raw.get("model", {}) or {}
    feat_raw = model_raw.get("features", {}) or {}
    model_spec = ModelSpec(
        u=int(model_raw.get("u", 5)),
        v=int(model_raw.get("v", 9)),
        enc_channels=int(model_raw.get("enc_channels", 64)),
        ctx_channels=int(model_raw.get("ctx_channels", 64)),
        feature_spec=FeatureSpec(**feat_raw) if feat_raw else FeatureSpec(),
    )
    train_raw = raw.get("train", {}) or {}
    use_augment = bool(train_raw.pop("use_augment", True))
    train_defaults = TrainConfig(
        model=model_spec,
        augment=augment_spec if use_augment else None,
        **{k: v for k, v in train_raw.items() if k in (
            "learning_rate", "epochs", "batch_size", "seed",
            "freeze_encoder", "freeze_context", "grad_clip_norm",
        )},
    )

    chunking = raw.get("chunking", {}) or {}
    window_s = float(chunking.get("window_s", 15.0))
    overlap_s = float(chunking.get("overlap_s", 2.0))
    if window_s > MAX_SEGMENT_SECONDS:
        raise ConfigError(f"chunking window_s must be <= {MAX_SEGMENT_SECONDS}")
    if not 0 <= overlap_s < window_s:
        raise ConfigError("chunking overlap_s must be >= 0 and < window_s")

    collect = raw.get("collect", {}) or {}
    sentences_file = None
    if collect.get("sentences"):
        sentences_file = resolve(collect["sentences"])
        if not sentences_file.exists():
            raise ConfigError(f"sentences file not found: {sentences_file}")

    return ProjectConfig(
        root=root,
        orthography=orth,
        schemes=schemes,
        recordings_dir=resolve(paths.get("recordings", "recordings")),
        manifest_path=resolve(paths.get("manifest", "manifest.jsonl")),
        models_dir=resolve(paths.get("models", "models")),
        reports_dir=resolve(paths.get("reports", "reports")),
        augment_spec=augment_spec,
        train_defaults=train_defaults,
        window_s=window_s,
        overlap_s=overlap_s,
        collect_storage=resolve(collect.get("storage", "collect_data")),
        sentences_file=sentences_file,
        token=collect.get("token"),
    )
