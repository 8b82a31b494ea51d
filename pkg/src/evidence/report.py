"""Matplotlib renderings of explanation and evaluation outputs.

Everything draws on the Agg backend and writes straight to files, so these
work headless alongside the CSV and JSON outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engine import ImportanceHistogram
from .harness import MetricsReport
from .spectra import Spectrogram

__all__ = [
    "save_importance_figure",
    "save_overview_figure",
    "save_metrics_figure",
]


def save_importance_figure(hist: ImportanceHistogram, path: str | Path, title: str = "Chunk importance") -> None:
    """Bar chart of survivor counts per chunk with the mean as a dashed line."""
    counts = np.asarray(hist.counts)
    x = np.arange(counts.size)
    colors = ["#d62728" if imp else "#7f7f7f" for imp in hist.important]
    fig, ax = plt.subplots(figsize=(max(6.0, counts.size * 0.12), 4.0))
    ax.bar(x, counts, color=colors, width=0.8)
    ax.axhline(hist.mean_count, color="black", linestyle="--", linewidth=1.0,
               label=f"mean = {hist.mean_count:.1f}")
    if hist.chunk_frequencies is not None and counts.size <= 40:
        labels = [f"{lo:.0f}-{hi:.0f}" for lo, hi in hist.chunk_frequencies]
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=90, fontsize=7)
        ax.set_xlabel("chunk frequency range (Hz)")
    else:
        ax.set_xlabel("chunk index")
    ax.set_ylabel("survivor count")
    ax.set_title(title)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_overview_figure(
    original: Spectrogram,
    chi: np.ndarray,
    filtered: Spectrogram,
    path: str | Path,
) -> None:
    """Original, chi, and filtered matrices side by side in grayscale."""
    panels = [
        ("original", original.values),
        ("chi", np.asarray(chi)),
        ("filtered", filtered.values),
    ]
    fig, axes = plt.subplots(1, 3, figsize=(12.0, 4.0))
    for ax, (name, values) in zip(axes, panels):
        ax.imshow(values, cmap="gray", aspect="auto", origin="lower")
        ax.set_title(name)
        ax.set_xlabel("frame")
        ax.set_ylabel("band")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_metrics_figure(baseline: MetricsReport, evidence: MetricsReport, path: str | Path) -> None:
    """Grouped bars: per-class F1 plus macro F1 and AUC, both conditions."""
    labels = list(baseline.class_names) + ["macro F1", "AUC"]
    base_vals = [m.f1 for m in baseline.per_class] + [baseline.macro_f1, baseline.auc]
    evid_vals = [m.f1 for m in evidence.per_class] + [evidence.macro_f1, evidence.auc]
    x = np.arange(len(labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6.0, len(labels) * 0.9), 4.0))
    ax.bar(x - width / 2, base_vals, width, label="baseline", color="#7f7f7f")
    ax.bar(x + width / 2, evid_vals, width, label="evidence", color="#d62728")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Classification quality, baseline vs evidence-filtered")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
