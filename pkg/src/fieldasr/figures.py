"""Matplotlib renderings saved next to the delimited report output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import EvalReport, SpeedupEntry


def speedup_figure(entries: list[SpeedupEntry], path: Path) -> None:
    """Speedup versus sample length, one marker per recorded sample."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    xs = [e.length_s / 60 for e in entries]
    ys = [e.speedup for e in entries]
    ax.plot(xs, ys, "o-", color="tab:blue")
    ax.axhline(1.0, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("sample length (min)")
    ax.set_ylabel("transcription speedup")
    ax.set_ylim(bottom=0)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def cer_figure(report: EvalReport, path: Path) -> None:
    """Per-segment CER bars with the corpus micro-average overlaid."""
    fig, ax = plt.subplots(figsize=(max(5, 0.4 * len(report.per_segment)), 3.2))
    ids = [s.id for s in report.per_segment]
    ax.bar(range(len(ids)), [100 * s.cer for s in report.per_segment], color="tab:orange")
    ax.axhline(100 * report.aggregate_cer, color="tab:red", lw=1.0,
               label=f"aggregate {100 * report.aggregate_cer:.1f}%")
    ax.set_xticks(range(len(ids)))
    ax.set_xticklabels(ids, rotation=90, fontsize=6)
    ax.set_ylabel("CER (%)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def history_figure(history, path: Path) -> None:
    """Training curves: mean epoch loss and train CER."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7, 3))
    epochs = [h.epoch for h in history]
    ax1.plot(epochs, [h.loss for h in history], color="tab:blue")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean CTC loss")
    ax2.plot(epochs, [100 * h.train_cer for h in history], color="tab:orange")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("train CER (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
