"""Evaluation harness.

Loads a labeled manifest, scores every item with and without the
explanation filter, and writes classification reports: per-class precision,
sensitivity, F1 and support, macro averages, and one-vs-rest AUC.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .engine import EvidenceConfig, run_evidence
from .predictor import Predictor
from .spectra import MelParams, Spectrogram, load_wav, mel_spectrogram, pad_or_trim, read_spectrogram_csv

__all__ = [
    "ManifestItem",
    "Manifest",
    "ClassMetrics",
    "ConfusionMetrics",
    "MetricsReport",
    "ItemOutcome",
    "load_manifest",
    "confusion_metrics",
    "roc_auc",
    "macro_auc",
    "build_report",
    "report_to_csv",
    "report_to_dict",
    "run_experiment",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ManifestItem:
    path: Path
    label: int


@dataclass(frozen=True)
class Manifest:
    classes: tuple[str, ...]
    items: tuple[ManifestItem, ...]


def load_manifest(path: str | Path) -> Manifest:
    """Parse {"classes": [...], "items": [{"path", "label"}, ...]}.

    Paths resolve relative to the manifest's directory. Labels must index
    into classes; duplicate paths and empty sections are errors.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: manifest must be a JSON object")
    classes = data.get("classes")
    if not isinstance(classes, list) or len(classes) < 2 or not all(isinstance(c, str) for c in classes):
        raise ValueError(f"{path}: 'classes' must list at least 2 class names")
    raw_items = data.get("items")
    if not isinstance(raw_items, list) or not raw_items:
        raise ValueError(f"{path}: 'items' must be a non-empty list")
    base = path.parent
    items = []
    seen = set()
    for i, entry in enumerate(raw_items):
        if not isinstance(entry, dict) or "path" not in entry or "label" not in entry:
            raise ValueError(f"{path}: item {i} needs 'path' and 'label'")
        label = entry["label"]
        if not isinstance(label, int) or not 0 <= label < len(classes):
            raise ValueError(
                f"{path}: item {i} label {label!r} out of range for {len(classes)} classes"
            )
        item_path = Path(entry["path"])
        if not item_path.is_absolute():
            item_path = base / item_path
        if item_path in seen:
            raise ValueError(f"{path}: duplicate item path {item_path}")
        seen.add(item_path)
        items.append(ManifestItem(path=item_path, label=label))
    return Manifest(classes=tuple(classes), items=tuple(items))


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    sensitivity: float
    f1: float
    support: int


@dataclass(frozen=True)
class ConfusionMetrics:
    per_class: tuple[ClassMetrics, ...]
    macro_precision: float
    macro_sensitivity: float
    macro_f1: float
    zero_division_classes: tuple[int, ...]


def confusion_metrics(predicted: Sequence[int], truth: Sequence[int], class_count: int) -> ConfusionMetrics:
    """Per-class precision, sensitivity and F1 from hard labels.

    A zero denominator yields 0 for that metric and flags the class rather
    than raising; macro averages are unweighted means over all classes,
    including absent ones.
    """
    p = np.asarray(predicted, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"predicted and truth must be equal-length 1-D, got {p.shape} and {t.shape}")
    if p.size == 0:
        raise ValueError("no items to score")
    if class_count < 2:
        raise ValueError("need at least 2 classes")
    for name, arr in (("predicted", p), ("truth", t)):
        if (arr < 0).any() or (arr >= class_count).any():
            raise ValueError(f"{name} labels outside [0, {class_count})")
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    per_class = []
    flagged = []
    for c in range(class_count):
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum()) - tp
        fn = int(cm[c, :].sum()) - tp
        support = tp + fn
        zero = False
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision, zero = 0.0, True
        if tp + fn > 0:
            sensitivity = tp / (tp + fn)
        else:
            sensitivity, zero = 0.0, True
        if precision + sensitivity > 0:
            f1 = 2 * precision * sensitivity / (precision + sensitivity)
        else:
            f1, zero = 0.0, True
        if zero:
            flagged.append(c)
        per_class.append(ClassMetrics(precision=precision, sensitivity=sensitivity, f1=f1, support=support))
    macro_p = float(np.mean([m.precision for m in per_class]))
    macro_s = float(np.mean([m.sensitivity for m in per_class]))
    macro_f = float(np.mean([m.f1 for m in per_class]))
    return ConfusionMetrics(
        per_class=tuple(per_class),
        macro_precision=macro_p,
        macro_sensitivity=macro_s,
        macro_f1=macro_f,
        zero_division_classes=tuple(flagged),
    )


def roc_auc(scores: Sequence[float], truth: Sequence[bool]) -> float:
    """Binary AUC via the rank-sum statistic; ties get average ranks."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth, dtype=bool)
    if s.shape != t.shape or s.ndim != 1:
        raise ValueError("scores and truth must be equal-length 1-D")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: truth contains a single class")
    ranks = rankdata(s)
    return float((ranks[t].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_auc(prob_matrix: np.ndarray, truth: Sequence[int], class_count: int) -> float:
    """Unweighted mean of one-vs-rest AUCs over classes present in truth."""
    probs = np.asarray(prob_matrix, dtype=np.float64)
    t = np.asarray(truth, dtype=np.int64)
    if probs.ndim != 2 or probs.shape != (t.size, class_count):
        raise ValueError(f"probability matrix shape {probs.shape} does not match {t.size} items x {class_count} classes")
    present = np.unique(t)
    if present.size < 2:
        raise ValueError("AUC undefined: truth contains a single class")
    return float(np.mean([roc_auc(probs[:, c], t == c) for c in present]))


@dataclass(frozen=True)
class MetricsReport:
    """One condition's classification report."""

    condition: str
    class_names: tuple[str, ...]
    per_class: tuple[ClassMetrics, ...]
    macro_precision: float
    macro_sensitivity: float
    macro_f1: float
    auc: float
    zero_division_classes: tuple[str, ...] = ()


def build_report(
    condition: str,
    class_names: Sequence[str],
    prob_matrix: np.ndarray,
    truth: Sequence[int],
) -> MetricsReport:
    """Classification report from probability rows and true labels."""
    names = tuple(class_names)
    probs = np.asarray(prob_matrix, dtype=np.float64)
    predicted = probs.argmax(axis=1)
    cm = confusion_metrics(predicted, truth, len(names))
    auc = macro_auc(probs, truth, len(names))
    return MetricsReport(
        condition=condition,
        class_names=names,
        per_class=cm.per_class,
        macro_precision=cm.macro_precision,
        macro_sensitivity=cm.macro_sensitivity,
        macro_f1=cm.macro_f1,
        auc=auc,
        zero_division_classes=tuple(names[c] for c in cm.zero_division_classes),
    )


def report_to_csv(report: MetricsReport) -> str:
    """Per-class rows, a Macro Average row with total support, then an AUC row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category", "precision", "sensitivity", "f1", "support"])
    total = 0
    for name, m in zip(report.class_names, report.per_class):
        writer.writerow([name, f"{m.precision:.6f}", f"{m.sensitivity:.6f}", f"{m.f1:.6f}", m.support])
        total += m.support
    writer.writerow(
        [
            "Macro Average",
            f"{report.macro_precision:.6f}",
            f"{report.macro_sensitivity:.6f}",
            f"{report.macro_f1:.6f}",
            total,
        ]
    )
    writer.writerow(["AUC", f"{report.auc:.6f}", "", "", ""])
    return buf.getvalue()


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "condition": report.condition,
        "classes": {
            name: {
                "precision": m.precision,
                "sensitivity": m.sensitivity,
                "f1": m.f1,
                "support": m.support,
            }
            for name, m in zip(report.class_names, report.per_class)
        },
        "macro": {
            "precision": report.macro_precision,
            "sensitivity": report.macro_sensitivity,
            "f1": report.macro_f1,
        },
        "auc": report.auc,
        "zero_division_classes": list(report.zero_division_classes),
    }


@dataclass(eq=False)
class ItemOutcome:
    """Per-item record written to items.jsonl."""

    item: ManifestItem
    baseline_probs: np.ndarray | None = None
    filtered_probs: np.ndarray | None = None
    n_survivors: int | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        if self.error is not None:
            return {"path": str(self.item.path), "label": self.item.label, "error": self.error}
        return {
            "path": str(self.item.path),
            "label": self.item.label,
            "baseline_probs": [float(v) for v in self.baseline_probs],
            "filtered_probs": [float(v) for v in self.filtered_probs],
            "n_survivors": int(self.n_survivors),
        }


def _load_item(item: ManifestItem, mel_params: MelParams, pad_seconds: float | None) -> Spectrogram:
    suffix = item.path.suffix.lower()
    if suffix == ".csv":
        return read_spectrogram_csv(item.path)
    if suffix == ".wav":
        clip = load_wav(item.path, target_rate=mel_params.sample_rate)
        if pad_seconds is not None:
            clip = pad_or_trim(clip, pad_seconds)
        return mel_spectrogram(clip, mel_params)
    raise ValueError(f"{item.path}: unsupported input type {suffix!r} (need .csv or .wav)")


def run_experiment(
    manifest: Manifest,
    predictor: Predictor,
    config: EvidenceConfig,
    out_dir: str | Path,
    mel_params: MelParams | None = None,
    pad_seconds: float | None = None,
    workers: int = 1,
) -> tuple[MetricsReport, MetricsReport]:
    """Score every manifest item plain and explanation-filtered.

    Items that fail to load are logged, recorded with an error field in
    items.jsonl, and left out of the metrics; engine and predictor failures
    abort the run. Returns (baseline report, evidence report) and writes
    baseline/evidence CSV and JSON reports plus items.jsonl under out_dir,
    all in manifest order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = mel_params if mel_params is not None else MelParams()
    info = predictor.info()
    if len(manifest.classes) != info.class_count:
        raise ValueError(
            f"manifest lists {len(manifest.classes)} classes, predictor has {info.class_count}"
        )

    def process(item: ManifestItem) -> ItemOutcome:
        try:
            spec = _load_item(item, params, pad_seconds)
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", item.path, exc)
            return ItemOutcome(item=item, error=str(exc))
        baseline = predictor.predict([spec.values])[0]
        result = run_evidence(spec, item.label, predictor, config, workers=1)
        filtered = predictor.predict([result.filtered.values])[0]
        return ItemOutcome(
            item=item,
            baseline_probs=baseline,
            filtered_probs=filtered,
            n_survivors=result.n_survivors,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(process, manifest.items))
    else:
        outcomes = [process(item) for item in manifest.items]

    with open(out_dir / "items.jsonl", "w", encoding="utf-8") as fh:
        for outcome in outcomes:
            fh.write(json.dumps(outcome.to_dict(), sort_keys=True) + "\n")

    scored = [o for o in outcomes if o.error is None]
    if not scored:
        raise EvidenceHarnessError("every manifest item failed to load")
    truth = [o.item.label for o in scored]
    baseline_probs = np.stack([o.baseline_probs for o in scored])
    filtered_probs = np.stack([o.filtered_probs for o in scored])
    baseline_report = build_report("baseline", manifest.classes, baseline_probs, truth)
    evidence_report = build_report("evidence", manifest.classes, filtered_probs, truth)
    for report, stem in ((baseline_report, "baseline"), (evidence_report, "evidence")):
        (out_dir / f"{stem}.csv").write_text(report_to_csv(report), encoding="utf-8")
        (out_dir / f"{stem}.json").write_text(
            json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return baseline_report, evidence_report


class EvidenceHarnessError(RuntimeError):
    """The experiment could not produce any metrics."""
