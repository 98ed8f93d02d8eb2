"""SNR improvement of an enhanced signal."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..dsp import SAMPLE_RATE
from ..exceptions import ShapeError
from .mixing import active_speech_level

SNR_CLAMP_DB = 100.0


class SNRGain(NamedTuple):
    delta: float
    snr_in: float
    snr_out: float
    clamped: bool


def _snr(level_db: float, residual: np.ndarray) -> tuple[float, bool]:
    p = float(np.mean(residual * residual))
    if p == 0.0:
        return SNR_CLAMP_DB, True
    return min(level_db - 10.0 * np.log10(p), SNR_CLAMP_DB), False


def delta_snr(s, y, s_hat, rate: int = SAMPLE_RATE) -> SNRGain:
    """``SNR_out - SNR_in`` with noise taken as ``y - s`` and ``s_hat - s``.

    A zero residual pins that SNR at 100 dB and sets ``clamped``.
    """
    s, y, s_hat = (np.asarray(a, dtype=np.float64) for a in (s, y, s_hat))
    if not s.shape == y.shape == s_hat.shape or s.ndim != 1:
        raise ShapeError("delta_snr expects three aligned 1-D signals of equal length")
    level = active_speech_level(s, rate)
    snr_in, c_in = _snr(level, y - s)
    snr_out, c_out = _snr(level, s_hat - s)
    return SNRGain(snr_out - snr_in, snr_in, snr_out, c_in or c_out)
