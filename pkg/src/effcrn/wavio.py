"""Mono WAV reading/writing (16-bit PCM or 32-bit float)."""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .dsp import SAMPLE_RATE
from .exceptions import DataError


def read_wav(path, expected_rate: int | None = SAMPLE_RATE) -> tuple[np.ndarray, int]:
    """Return float64 samples in [-1, 1] and the sample rate.

    No resampling: a rate other than ``expected_rate`` is an error.
    """
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise DataError(f"{path}: cannot read WAV ({exc})") from exc
    if expected_rate is not None and rate != expected_rate:
        raise DataError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz "
                        "(resample the file first)")
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype.kind == "f":
        x = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}")
    return x, rate


def write_wav(path, samples, rate: int = SAMPLE_RATE, fmt: str = "pcm16") -> int:
    """Write mono audio; PCM16 saturates at full scale.  Returns clipped sample count."""
    x = np.asarray(samples, dtype=np.float64)
    if fmt == "float":
        wavfile.write(path, rate, x.astype(np.float32))
        return 0
    if fmt != "pcm16":
        raise ValueError(f"unknown WAV format {fmt!r}")
    scaled = np.round(x * 32768.0)
    clipped = int(np.count_nonzero((scaled > 32767) | (scaled < -32768)))
    wavfile.write(path, rate, np.clip(scaled, -32768, 32767).astype(np.int16))
    return clipped
