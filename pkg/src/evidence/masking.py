"""Chunk masks over spectrogram rows.

A grid partitions the l rows into m contiguous chunks. Masks keep or drop
whole chunks; they are drawn deterministically from a counter-based PRNG or
enumerated exhaustively, expanded to per-row flags, and applied as an
elementwise product with a fill value for dropped rows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .spectra import Spectrogram

__all__ = [
    "SplitMix64",
    "ChunkGrid",
    "ChunkMask",
    "RowSelection",
    "make_grid",
    "sample_mask",
    "enumerate_masks",
    "expand_mask",
    "apply_mask",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    """splitmix64 finalizer: avalanche a 64-bit value."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class SplitMix64:
    """Tiny deterministic 64-bit PRNG (splitmix64)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), rejection-sampled to avoid modulo bias."""
        if n <= 0:
            raise ValueError(f"n must be positive, got {n}")
        limit = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n


@dataclass(frozen=True)
class ChunkGrid:
    """Partition of l rows into m contiguous chunks."""

    l: int
    m: int
    boundaries: tuple[tuple[int, int], ...]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([stop - start for start, stop in self.boundaries], dtype=np.int64)

    def chunk_of_row(self, row: int) -> int:
        for z, (start, stop) in enumerate(self.boundaries):
            if start <= row < stop:
                return z
        raise ValueError(f"row {row} outside [0, {self.l})")


@dataclass(frozen=True)
class ChunkMask:
    """Keep/drop flag per chunk; bit z covers chunk z."""

    bits: tuple[int, ...]
    iteration_index: int = 0

    def __post_init__(self) -> None:
        if not all(b in (0, 1) for b in self.bits):
            raise ValueError("mask bits must be 0 or 1")

    @property
    def popcount(self) -> int:
        return sum(self.bits)


@dataclass(frozen=True, eq=False)
class RowSelection:
    """Per-row keep/drop flags, block-constant within grid chunks."""

    v: np.ndarray


def make_grid(l: int, m: int) -> ChunkGrid:
    """Split [0, l) into m contiguous chunks.

    The first l mod m chunks get one extra row, so sizes differ by at most
    one and every row lands in exactly one chunk.
    """
    if l <= 0:
        raise ValueError(f"row count must be positive, got {l}")
    if not 1 <= m <= l:
        raise ValueError(f"need 1 <= chunks <= rows, got chunks={m}, rows={l}")
    base, extra = divmod(l, m)
    boundaries = []
    start = 0
    for z in range(m):
        size = base + (1 if z < extra else 0)
        boundaries.append((start, start + size))
        start += size
    return ChunkGrid(l=l, m=m, boundaries=tuple(boundaries))


def sample_mask(seed: int, iteration: int, grid: ChunkGrid, features: int) -> ChunkMask:
    """Draw `features` distinct chunks for one iteration, deterministically.

    The sub-stream for an iteration is keyed by a splitmix64 step over
    (seed, iteration), so masks can be regenerated in any order. Chunk
    choices use a partial Fisher-Yates shuffle, unbiased for any m.
    """
    if iteration < 0:
        raise ValueError(f"iteration must be non-negative, got {iteration}")
    if not 1 <= features <= grid.m:
        raise ValueError(f"need 1 <= features <= chunks, got features={features}, chunks={grid.m}")
    sub_seed = _mix64((seed + (iteration + 1) * _GOLDEN) & _MASK64)
    rng = SplitMix64(sub_seed)
    pool = list(range(grid.m))
    for i in range(features):
        j = i + rng.below(grid.m - i)
        pool[i], pool[j] = pool[j], pool[i]
    bits = [0] * grid.m
    for z in pool[:features]:
        bits[z] = 1
    return ChunkMask(bits=tuple(bits), iteration_index=iteration)


def enumerate_masks(
    grid: ChunkGrid, features: int | None = None, budget: int = 1 << 20
) -> list[ChunkMask]:
    """All masks over the grid, in a stable order.

    With ``features=None``: all 2**m subsets, ordered as big-endian binary
    counts (chunk 0 is the most significant bit). With ``features=k``: all
    C(m, k) masks in lexicographic order of their chunk index tuples.
    Raises if the count would exceed ``budget``.
    """
    m = grid.m
    if features is None:
        count = 1 << m
        if count > budget:
            raise ValueError(f"2**{m} = {count} masks exceeds budget {budget}")
        masks = []
        for value in range(count):
            bits = tuple((value >> (m - 1 - z)) & 1 for z in range(m))
            masks.append(ChunkMask(bits=bits, iteration_index=value))
        return masks
    if not 1 <= features <= m:
        raise ValueError(f"need 1 <= features <= chunks, got features={features}, chunks={m}")
    count = math.comb(m, features)
    if count > budget:
        raise ValueError(f"C({m}, {features}) = {count} masks exceeds budget {budget}")
    masks = []
    for idx, combo in enumerate(itertools.combinations(range(m), features)):
        bits = [0] * m
        for z in combo:
            bits[z] = 1
        masks.append(ChunkMask(bits=tuple(bits), iteration_index=idx))
    return masks


def expand_mask(mask: ChunkMask, grid: ChunkGrid) -> RowSelection:
    """Blow chunk flags up to per-row flags: row i gets bit of its chunk."""
    if len(mask.bits) != grid.m:
        raise ValueError(f"mask has {len(mask.bits)} bits for a {grid.m}-chunk grid")
    v = np.repeat(np.asarray(mask.bits, dtype=np.uint8), grid.sizes)
    return RowSelection(v=v)


def apply_mask(spec: Spectrogram, selection: RowSelection, fill: float = 0.0) -> Spectrogram:
    """Keep rows flagged 1, replace rows flagged 0 with ``fill``."""
    values = spec.values
    v = selection.v
    if v.shape[0] != values.shape[0]:
        raise ValueError(f"selection covers {v.shape[0]} rows, matrix has {values.shape[0]}")
    out = np.where(v.astype(bool)[:, None], values, float(fill))
    return Spectrogram(values=out, row_frequencies=spec.row_frequencies)
