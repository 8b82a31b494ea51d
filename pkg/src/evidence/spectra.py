"""Audio ingest and Mel spectrograms.

WAV decoding, linear-interpolation resampling, a dB-scaled Mel transform
with Slaney-style triangular filters, a plain-text CSV round trip, and a
grayscale PNG export.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image
from scipy.io import wavfile

__all__ = [
    "AudioClip",
    "MelParams",
    "Spectrogram",
    "load_wav",
    "pad_or_trim",
    "mel_filterbank",
    "mel_spectrogram",
    "power_to_db",
    "read_spectrogram_csv",
    "write_spectrogram_csv",
    "write_spectrogram_png",
]

_AMIN = 1e-10


@dataclass
class AudioClip:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.samples.size == 0:
            raise ValueError("audio clip has no samples")
        if not np.isfinite(self.samples).all():
            raise ValueError("audio clip contains NaN or Inf")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        peak = float(np.max(np.abs(self.samples)))
        if peak > 1.0 + 1e-9:
            raise ValueError(f"samples exceed [-1, 1] (peak {peak:.6g})")

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelParams:
    """Mel transform settings.

    ``fmax=None`` means the Nyquist frequency of ``sample_rate``.
    """

    n_fft: int = 2048
    hop: int = 344
    n_mels: int = 150
    sample_rate: int = 22050
    fmin: float = 0.0
    fmax: float | None = None
    top_db: float = 80.0

    def __post_init__(self) -> None:
        if self.n_fft <= 0 or self.hop <= 0:
            raise ValueError("n_fft and hop must be positive")
        if self.hop > self.n_fft:
            raise ValueError(f"hop {self.hop} exceeds n_fft {self.n_fft}")
        if self.n_mels <= 0:
            raise ValueError("n_mels must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        nyquist = self.sample_rate / 2
        fmax = nyquist if self.fmax is None else self.fmax
        if not 0.0 <= self.fmin < fmax:
            raise ValueError(f"need 0 <= fmin < fmax, got fmin={self.fmin}, fmax={fmax}")
        if fmax > nyquist + 1e-9:
            raise ValueError(f"fmax {fmax} exceeds Nyquist {nyquist}")
        if self.top_db <= 0:
            raise ValueError("top_db must be positive")

    @property
    def effective_fmax(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else self.fmax


@dataclass(eq=False)
class Spectrogram:
    """Real l x d matrix: rows are frequency bands, columns are time frames."""

    values: np.ndarray
    row_frequencies: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.size == 0:
            raise ValueError(f"expected a non-empty 2-D matrix, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("spectrogram contains NaN or Inf")
        if self.row_frequencies is not None:
            freqs = np.asarray(self.row_frequencies, dtype=np.float64).reshape(-1)
            if freqs.size != self.values.shape[0]:
                raise ValueError(
                    f"row_frequencies has {freqs.size} entries for {self.values.shape[0]} rows"
                )
            self.row_frequencies = freqs

    @property
    def l(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    """Map integer PCM to [-1, 1]; float data passes through."""
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise ValueError(f"unsupported WAV sample format {data.dtype}")


def _resample_linear(x: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    """Resample by linear interpolation on the shared time axis."""
    if source_rate == target_rate:
        return x.astype(np.float64)
    n_out = max(1, int(round(x.size * target_rate / source_rate)))
    t_out = np.arange(n_out, dtype=np.float64) / target_rate
    t_in = np.arange(x.size, dtype=np.float64) / source_rate
    return np.interp(t_out, t_in, x)


def load_wav(path: str | Path, target_rate: int = 22050) -> AudioClip:
    """Read a RIFF/WAVE file, average channels to mono, resample, peak-normalize.

    Accepts 8/16/24/32-bit PCM and 32/64-bit float WAVs. Raises OSError for
    unreadable paths and ValueError for non-WAV or malformed content.
    """
    path = Path(path)
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic != b"RIFF":
        raise ValueError(f"{path}: not a RIFF/WAVE file")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise ValueError(f"{path}: unsupported or malformed WAV ({exc})") from exc
    if data.shape[0] == 0:
        raise ValueError(f"{path}: zero-length audio")
    samples = _pcm_to_float(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    samples = _resample_linear(samples, int(rate), target_rate)
    peak = float(np.max(np.abs(samples)))
    if peak > 0.0:
        samples = samples / peak
    return AudioClip(samples=samples, sample_rate=target_rate)


def pad_or_trim(clip: AudioClip, seconds: float) -> AudioClip:
    """Zero-pad at the end, or truncate, to an exact duration."""
    if seconds <= 0:
        raise ValueError("seconds must be positive")
    n_target = int(round(seconds * clip.sample_rate))
    x = clip.samples
    if x.size >= n_target:
        x = x[:n_target]
    else:
        x = np.concatenate([x, np.zeros(n_target - x.size)])
    return AudioClip(samples=x, sample_rate=clip.sample_rate)


# Slaney mel scale: linear below 1 kHz, logarithmic above.
_F_SP = 200.0 / 3.0
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOG_STEP = math.log(6.4) / 27.0


def hz_to_mel(hz):
    hz = np.asarray(hz, dtype=np.float64)
    mel = hz / _F_SP
    log_region = hz >= _MIN_LOG_HZ
    mel = np.where(log_region, _MIN_LOG_MEL + np.log(np.maximum(hz, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOG_STEP, mel)
    return mel


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    hz = mel * _F_SP
    log_region = mel >= _MIN_LOG_MEL
    return np.where(log_region, _MIN_LOG_HZ * np.exp(_LOG_STEP * (mel - _MIN_LOG_MEL)), hz)


def mel_filterbank(params: MelParams) -> tuple[np.ndarray, np.ndarray]:
    """Triangular filters on the Slaney mel scale, area-normalized.

    Returns (weights, centers): weights of shape (n_mels, 1 + n_fft // 2)
    and the center frequency in Hz of each band.
    """
    n_freq = 1 + params.n_fft // 2
    fftfreqs = np.linspace(0.0, params.sample_rate / 2.0, n_freq)
    mel_pts = np.linspace(
        hz_to_mel(params.fmin), hz_to_mel(params.effective_fmax), params.n_mels + 2
    )
    hz_pts = mel_to_hz(mel_pts)
    fdiff = np.diff(hz_pts)
    ramps = hz_pts[:, None] - fftfreqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    # Area normalization: each triangle integrates to the same energy.
    enorm = 2.0 / (hz_pts[2:] - hz_pts[:-2])
    weights = weights * enorm[:, None]
    centers = hz_pts[1:-1].copy()
    return weights, centers


def power_to_db(power: np.ndarray, top_db: float = 80.0) -> np.ndarray:
    """10*log10(power / ref) with ref the global max, floored at max - top_db."""
    power = np.asarray(power, dtype=np.float64)
    ref = max(float(power.max()), _AMIN)
    db = 10.0 * np.log10(np.maximum(power, _AMIN) / ref)
    return np.maximum(db, db.max() - top_db)


def mel_spectrogram(clip: AudioClip, params: MelParams | None = None) -> Spectrogram:
    """Power Mel spectrogram on a dB scale.

    Center-padded STFT (reflect, n_fft // 2 each side) with a periodic Hann
    window, power spectrum, mel projection, then dB conversion relative to
    the global maximum with a top_db floor. Column count is
    1 + floor(len(clip) / hop).
    """
    if params is None:
        params = MelParams()
    if clip.sample_rate != params.sample_rate:
        raise ValueError(
            f"clip rate {clip.sample_rate} != transform rate {params.sample_rate}; resample first"
        )
    x = clip.samples
    if x.size < params.hop:
        raise ValueError(f"clip of {x.size} samples is shorter than one hop ({params.hop})")
    pad = params.n_fft // 2
    padded = np.pad(x, pad, mode="reflect")
    k = np.arange(params.n_fft, dtype=np.float64)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * k / params.n_fft)
    frames = sliding_window_view(padded, params.n_fft)[:: params.hop]
    spectrum = np.fft.rfft(frames * window, axis=1)
    power = np.abs(spectrum) ** 2
    weights, centers = mel_filterbank(params)
    mel_power = weights @ power.T
    db = power_to_db(mel_power, top_db=params.top_db)
    return Spectrogram(values=db, row_frequencies=centers)


def write_spectrogram_csv(spec: Spectrogram, path: str | Path) -> None:
    """One CSV row per matrix row; full float precision via repr."""
    lines = []
    if spec.row_frequencies is not None:
        lines.append("# freqs: " + ",".join(repr(float(f)) for f in spec.row_frequencies))
    for row in spec.values:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_spectrogram_csv(path: str | Path) -> Spectrogram:
    """Parse a spectrogram CSV written by :func:`write_spectrogram_csv`.

    An optional leading ``# freqs:`` header carries row center frequencies.
    Ragged rows, non-numeric cells, and empty files are errors.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    freqs = None
    if lines and lines[0].lstrip().startswith("#"):
        header = lines.pop(0).lstrip()
        if not header.startswith("# freqs:"):
            raise ValueError(f"{path}: unrecognized header {header!r}")
        cells = header[len("# freqs:"):].split(",")
        try:
            freqs = np.array([float(c) for c in cells])
        except ValueError as exc:
            raise ValueError(f"{path}: bad frequency header: {exc}") from exc
    if not lines:
        raise ValueError(f"{path}: empty spectrogram CSV")
    width = None
    rows = []
    for i, ln in enumerate(lines):
        cells = ln.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ValueError(f"{path}: row {i} has {len(cells)} cells, expected {width}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric cell in row {i} ({exc})") from exc
    values = np.array(rows, dtype=np.float64)
    if freqs is not None and freqs.size != values.shape[0]:
        raise ValueError(
            f"{path}: frequency header has {freqs.size} entries for {values.shape[0]} rows"
        )
    return Spectrogram(values=values, row_frequencies=freqs)


def write_spectrogram_png(spec: Spectrogram, path: str | Path) -> None:
    """8-bit grayscale render, lowest-frequency row at the bottom.

    Values map linearly with min -> 0 and max -> 255; a constant matrix
    renders as all black.
    """
    values = spec.values
    lo = float(values.min())
    hi = float(values.max())
    if hi > lo:
        scaled = (values - lo) / (hi - lo) * 255.0
    else:
        scaled = np.zeros_like(values)
    img = np.flipud(np.rint(scaled).astype(np.uint8))
    Image.fromarray(img, mode="L").save(Path(path))
