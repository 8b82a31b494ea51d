"""Survivor-averaged explanation engine.

Masked variants of a spectrogram are scored against the true label with
cross-entropy. The best-scoring variants survive, and averaging their masks
yields a per-chunk inclusion fraction A': the explanation is chi = A' * M
row by row, a filtered matrix that zeroes rows with below-mean evidence,
and a histogram of how often each chunk appears among survivors.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .masking import ChunkGrid, ChunkMask, enumerate_masks, make_grid, sample_mask
from .predictor import Predictor, coerce_probabilities
from .spectra import Spectrogram

__all__ = [
    "EvidenceError",
    "Selection",
    "EvidenceConfig",
    "ScoreRecord",
    "ChiMap",
    "ImportanceHistogram",
    "EvidenceResult",
    "cross_entropy",
    "minmax_normalize",
    "weight_of",
    "select_survivors",
    "chi_estimate",
    "appendix_filter",
    "importance_histogram",
    "run_evidence",
]


class EvidenceError(RuntimeError):
    """A run could not produce a valid explanation."""


@dataclass(frozen=True)
class Selection:
    """Survivor rule.

    mode "top": keep the best max(1, int(K * value)) variants by normalized
    entropy, ties broken by iteration index. mode "absolute": keep variants
    whose raw entropy is at most value.
    """

    mode: str
    value: float

    def __post_init__(self) -> None:
        if self.mode not in ("top", "absolute"):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.mode == "top" and not 0.0 < self.value <= 1.0:
            raise ValueError(f"top fraction must be in (0, 1], got {self.value}")
        if self.mode == "absolute" and self.value < 0.0:
            raise ValueError(f"absolute threshold must be non-negative, got {self.value}")

    @classmethod
    def top_fraction(cls, t: float) -> "Selection":
        return cls(mode="top", value=float(t))

    @classmethod
    def absolute(cls, w: float) -> "Selection":
        return cls(mode="absolute", value=float(w))

    @classmethod
    def parse(cls, text: str) -> "Selection":
        """Parse "top:0.25", "absolute:0.01", or the short form "abs:0.01"."""
        mode, sep, raw = text.partition(":")
        if not sep:
            raise ValueError(f"selection must look like mode:value, got {text!r}")
        mode = mode.strip()
        if mode == "abs":
            mode = "absolute"
        try:
            value = float(raw)
        except ValueError as exc:
            raise ValueError(f"bad selection value {raw!r}") from exc
        return cls(mode=mode, value=value)

    def describe(self) -> str:
        return f"{self.mode}:{self.value:g}"


@dataclass(frozen=True)
class EvidenceConfig:
    """Everything that determines a run besides the matrix and the model."""

    num_chunks: int
    features: int
    iterations: int = 500
    selection: Selection = field(default_factory=lambda: Selection("top", 0.25))
    estimator: str = "unweighted"
    weight_source: str = "raw_entropy"
    seed: int = 0
    epsilon: float = 1e-12
    exhaustive: bool = False

    def __post_init__(self) -> None:
        if self.num_chunks < 1:
            raise ValueError("num_chunks must be positive")
        if not 1 <= self.features <= self.num_chunks:
            raise ValueError(
                f"need 1 <= features <= num_chunks, got features={self.features}, "
                f"num_chunks={self.num_chunks}"
            )
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.estimator not in ("unweighted", "weighted"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.weight_source not in ("raw_entropy", "normalized_entropy"):
            raise ValueError(f"unknown weight source {self.weight_source!r}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")

    def to_dict(self) -> dict:
        return {
            "num_chunks": self.num_chunks,
            "features": self.features,
            "iterations": self.iterations,
            "selection": {"mode": self.selection.mode, "value": self.selection.value},
            "estimator": self.estimator,
            "weight_source": self.weight_source,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "exhaustive": self.exhaustive,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvidenceConfig":
        sel = data.get("selection", {})
        return cls(
            num_chunks=int(data["num_chunks"]),
            features=int(data["features"]),
            iterations=int(data.get("iterations", 500)),
            selection=Selection(mode=sel.get("mode", "top"), value=float(sel.get("value", 0.25))),
            estimator=str(data.get("estimator", "unweighted")),
            weight_source=str(data.get("weight_source", "raw_entropy")),
            seed=int(data.get("seed", 0)),
            epsilon=float(data.get("epsilon", 1e-12)),
            exhaustive=bool(data.get("exhaustive", False)),
        )


@dataclass(frozen=True)
class ScoreRecord:
    """One scored variant: its mask, raw and normalized entropy, and weight."""

    iteration_index: int
    mask: ChunkMask
    entropy: float
    normalized_entropy: float
    weight: float

    def __post_init__(self) -> None:
        if self.entropy < 0.0:
            raise ValueError("entropy must be non-negative")
        if not 0.0 <= self.normalized_entropy <= 1.0:
            raise ValueError("normalized entropy must lie in [0, 1]")
        if not 0.0 < self.weight <= 1.0:
            raise ValueError("weight must lie in (0, 1]")


@dataclass(eq=False)
class ChiMap:
    """Explanation matrix with per-row and per-chunk aggregates."""

    values: np.ndarray
    row_scores: np.ndarray
    chunk_inclusion: np.ndarray


@dataclass(eq=False)
class ImportanceHistogram:
    """Per-chunk survivor counts; a chunk is important above the mean count."""

    counts: np.ndarray
    mean_count: float
    important: np.ndarray
    chunk_frequencies: np.ndarray | None = None


@dataclass(eq=False)
class EvidenceResult:
    """Everything a run produces."""

    chi: ChiMap
    filtered: Spectrogram
    histogram: ImportanceHistogram
    n_survivors: int
    config: EvidenceConfig
    label: int
    wall_time_s: float

    def to_dict(self) -> dict:
        hist = self.histogram
        freq = hist.chunk_frequencies
        return {
            "config": self.config.to_dict(),
            "label": self.label,
            "n_survivors": self.n_survivors,
            "chunk_inclusion": [float(v) for v in self.chi.chunk_inclusion],
            "histogram": {
                "counts": [int(c) for c in hist.counts],
                "mean": float(hist.mean_count),
                "important": [bool(b) for b in hist.important],
                "chunk_frequencies": None if freq is None else [[float(a), float(b)] for a, b in freq],
            },
        }

    def to_json(self) -> str:
        # Wall time stays off the record so equal runs serialize identically.
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def cross_entropy(truth: Sequence[float], predicted: Sequence[float], epsilon: float = 1e-12) -> float:
    """Cross-entropy of a probability row against a one-hot truth vector.

    Predicted values are clamped to [epsilon, 1] before the log, so a
    confident wrong answer scores -log(epsilon) instead of infinity.
    """
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if t.shape != p.shape:
        raise ValueError(f"truth has shape {t.shape}, predicted {p.shape}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    ones = t == 1.0
    if int(ones.sum()) != 1 or np.count_nonzero(t) != 1:
        raise ValueError(f"truth must be one-hot, got {t.tolist()}")
    clamped = np.clip(p, epsilon, 1.0)
    return float(-np.sum(t * np.log(clamped)))


def minmax_normalize(values: Sequence[float]) -> np.ndarray:
    """Rescale to [0, 1]; a constant input maps to all zeros."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot normalize an empty array")
    if not np.isfinite(arr).all():
        raise ValueError("cannot normalize non-finite values")
    lo = float(arr.min())
    hi = float(arr.max())
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def weight_of(entropy: float) -> float:
    """Survivor weight 1 / (entropy + 1): 1 at a perfect score, toward 0 as it worsens."""
    if entropy < 0.0:
        raise ValueError(f"entropy must be non-negative, got {entropy}")
    return 1.0 / (entropy + 1.0)


def select_survivors(records: Sequence[ScoreRecord], selection: Selection) -> list[ScoreRecord]:
    """Apply the survivor rule.

    "top" sorts by (normalized entropy, iteration index) ascending and keeps
    the first max(1, int(K * value)); the index tie-break makes equal scores
    deterministic. "absolute" keeps records with raw entropy <= value and
    may return an empty list.
    """
    if not records:
        raise ValueError("no score records to select from")
    if selection.mode == "absolute":
        return [r for r in records if r.entropy <= selection.value]
    order = sorted(records, key=lambda r: (r.normalized_entropy, r.iteration_index))
    n_keep = max(1, int(len(records) * selection.value))
    return order[:n_keep]


def _survivor_bits(survivors: Sequence[ScoreRecord], grid: ChunkGrid) -> np.ndarray:
    bits = np.array([r.mask.bits for r in survivors], dtype=np.float64)
    if bits.shape[1] != grid.m:
        raise ValueError(f"masks cover {bits.shape[1]} chunks, grid has {grid.m}")
    return bits


def chi_estimate(
    spec: Spectrogram,
    survivors: Sequence[ScoreRecord],
    grid: ChunkGrid,
    estimator: str = "unweighted",
) -> ChiMap:
    """Average the survivors' masked variants without materializing them.

    Every masked variant is M with whole chunks zeroed, so the average is
    M scaled per chunk: unweighted by the inclusion fraction A'(z), weighted
    by mean(weight * bit) over survivors. Values never leave
    [min(0, M), max(0, M)] because each scale factor is in [0, 1].
    """
    if not survivors:
        raise ValueError("empty survivor set")
    if estimator not in ("unweighted", "weighted"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if spec.l != grid.l:
        raise ValueError(f"matrix has {spec.l} rows, grid covers {grid.l}")
    bits = _survivor_bits(survivors, grid)
    n = len(survivors)
    inclusion = bits.sum(axis=0) / n
    if estimator == "weighted":
        w = np.array([r.weight for r in survivors], dtype=np.float64)
        chunk_scale = (w @ bits) / n
    else:
        chunk_scale = inclusion
    row_scale = np.repeat(chunk_scale, grid.sizes)
    values = row_scale[:, None] * spec.values
    return ChiMap(values=values, row_scores=values.sum(axis=1), chunk_inclusion=inclusion)


def appendix_filter(spec: Spectrogram, chi: ChiMap) -> Spectrogram:
    """Zero original rows whose chi row sum falls below the mean row sum.

    The mean is clamped to the maximum row sum before comparing, so a
    constant profile keeps every row despite float rounding, and the best
    row always survives.
    """
    if chi.values.shape != spec.values.shape:
        raise ValueError(f"chi shape {chi.values.shape} != matrix shape {spec.values.shape}")
    arr = chi.row_scores
    pp = min(float(arr.mean()), float(arr.max()))
    keep = arr >= pp
    out = np.where(keep[:, None], spec.values, 0.0)
    return Spectrogram(values=out, row_frequencies=spec.row_frequencies)


def importance_histogram(
    survivors: Sequence[ScoreRecord],
    grid: ChunkGrid,
    row_frequencies: np.ndarray | None = None,
) -> ImportanceHistogram:
    """Count how often each chunk appears among survivors.

    A chunk is flagged important when its count exceeds the mean count over
    all chunks. When row center frequencies are known, each chunk also gets
    its covered Hz range for labeling.
    """
    if not survivors:
        raise ValueError("empty survivor set")
    bits = _survivor_bits(survivors, grid).astype(np.int64)
    counts = bits.sum(axis=0)
    mean_count = float(counts.sum() / grid.m)
    important = counts > mean_count
    chunk_freq = None
    if row_frequencies is not None:
        freqs = np.asarray(row_frequencies, dtype=np.float64)
        if freqs.size != grid.l:
            raise ValueError(f"{freqs.size} row frequencies for a {grid.l}-row grid")
        chunk_freq = np.array(
            [[freqs[start:stop].min(), freqs[start:stop].max()] for start, stop in grid.boundaries]
        )
    return ImportanceHistogram(
        counts=counts, mean_count=mean_count, important=important, chunk_frequencies=chunk_freq
    )


def _score_batch(
    batch: Sequence[ChunkMask],
    spec: Spectrogram,
    sizes: np.ndarray,
    one_hot: np.ndarray,
    predictor: Predictor,
    class_count: int,
    epsilon: float,
) -> np.ndarray:
    """Entropy per mask for one batch, materializing only this batch's variants."""
    bits = np.array([mk.bits for mk in batch], dtype=np.float64)
    v = np.repeat(bits, sizes, axis=1)
    variants = v[:, :, None] * spec.values[None, :, :]
    probs = coerce_probabilities(
        predictor.predict(list(variants)), class_count=class_count, where="predict batch"
    )
    if probs.shape[0] != len(batch):
        raise EvidenceError(f"predictor returned {probs.shape[0]} rows for {len(batch)} inputs")
    return np.array([cross_entropy(one_hot, row, epsilon) for row in probs])


def run_evidence(
    spec: Spectrogram,
    label: int,
    predictor: Predictor,
    config: EvidenceConfig,
    workers: int = 1,
) -> EvidenceResult:
    """Run the full pipeline: masks, scores, survivors, chi, filter, histogram.

    Deterministic for a fixed (spec, label, config): masks come from the
    seeded counter PRNG, batches are scored in order (worker threads only
    parallelize across batches and results are reassembled by position),
    and survivor ties break by iteration index.
    """
    start = time.perf_counter()
    info = predictor.info()
    if not 0 <= label < info.class_count:
        raise ValueError(f"label {label} out of range for {info.class_count} classes")
    grid = make_grid(spec.l, config.num_chunks)
    if config.exhaustive:
        masks = enumerate_masks(grid)
    else:
        masks = [
            sample_mask(config.seed, i, grid, config.features) for i in range(config.iterations)
        ]
    one_hot = np.zeros(info.class_count, dtype=np.float64)
    one_hot[label] = 1.0
    sizes = grid.sizes
    limit = max(1, info.batch_limit)
    batches = [masks[i : i + limit] for i in range(0, len(masks), limit)]

    def score(batch: Sequence[ChunkMask]) -> np.ndarray:
        return _score_batch(batch, spec, sizes, one_hot, predictor, info.class_count, config.epsilon)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entropy_parts = list(pool.map(score, batches))
    else:
        entropy_parts = [score(b) for b in batches]
    entropies = np.concatenate(entropy_parts)
    normalized = minmax_normalize(entropies)
    source = entropies if config.weight_source == "raw_entropy" else normalized
    weights = 1.0 / (source + 1.0)
    records = [
        ScoreRecord(
            iteration_index=mk.iteration_index,
            mask=mk,
            entropy=float(h),
            normalized_entropy=float(nh),
            weight=float(w),
        )
        for mk, h, nh, w in zip(masks, entropies, normalized, weights)
    ]
    survivors = select_survivors(records, config.selection)
    if not survivors:
        raise EvidenceError(
            f"selection {config.selection.describe()} kept no variants "
            f"(best entropy was {entropies.min():.6g})"
        )
    chi = chi_estimate(spec, survivors, grid, config.estimator)
    filtered = appendix_filter(spec, chi)
    histogram = importance_histogram(survivors, grid, spec.row_frequencies)
    return EvidenceResult(
        chi=chi,
        filtered=filtered,
        histogram=histogram,
        n_survivors=len(survivors),
        config=config,
        label=label,
        wall_time_s=time.perf_counter() - start,
    )
