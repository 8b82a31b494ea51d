"""Shared fixtures: synthetic audio on disk and repo paths."""

import struct
import wave
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
MODEL_SERVER = Path(__file__).resolve().parent / "model_server.py"


def write_wav_pcm16(path, samples, rate):
    """Write float samples in [-1, 1] as 16-bit PCM."""
    samples = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.rint(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1 if pcm.ndim == 1 else pcm.shape[1])
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


def write_wav_float32(path, samples, rate):
    """Write float samples as an IEEE-float WAV (format tag 3)."""
    samples = np.asarray(samples, dtype="<f4")
    n = samples.size
    data = samples.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, 3, 1, rate, rate * 4, 4, 32)
    body = b"data" + struct.pack("<I", len(data)) + data
    path.write_bytes(header + fmt + body)


def sine(freq, seconds, rate, amplitude=0.8):
    t = np.arange(int(round(seconds * rate))) / rate
    return amplitude * np.sin(2.0 * np.pi * freq * t)


@pytest.fixture
def tone_wav(tmp_path):
    """One second of a 440 Hz tone at 22050 Hz, 16-bit PCM."""
    path = tmp_path / "tone.wav"
    write_wav_pcm16(path, sine(440.0, 1.0, 22050), 22050)
    return path
