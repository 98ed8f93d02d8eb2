"""Active speech level and SNR-controlled mixing.

The level meter is a compact envelope-threshold estimator in the spirit of
ITU-T P.56: a two-stage exponential envelope with 30 ms time constant,
200 ms hangover, a ladder of thresholds spaced 6.02 dB apart and a 15.9 dB
margin.  Levels are in dBov, where a full-scale square wave reads 0 dBov.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from ..dsp import SAMPLE_RATE
from ..exceptions import DataError

TIME_CONSTANT = 0.03
HANGOVER = 0.2
MARGIN_DB = 15.9
THRESHOLD_EXPONENTS = np.arange(-15, 1)
TARGET_LEVEL_DBOV = -26.0


def _db(power):
    return 10.0 * np.log10(power)


def _envelope(x: np.ndarray, rate: int) -> np.ndarray:
    g = np.exp(-1.0 / (rate * TIME_CONSTANT))
    env = lfilter([1.0 - g], [1.0, -g], np.abs(x))
    return lfilter([1.0 - g], [1.0, -g], env)


def _active_counts(env: np.ndarray, thresholds: np.ndarray, hang: int) -> np.ndarray:
    """Samples within ``hang`` samples after the envelope last reached each threshold."""
    counts = np.empty(thresholds.size, dtype=np.int64)
    n = env.size
    for j, c in enumerate(thresholds):
        hits = np.flatnonzero(env >= c)
        if hits.size == 0:
            counts[j] = 0
            continue
        # union of [hit, hit + hang) intervals
        ends = np.minimum(hits + hang, n)
        gaps = hits[1:] - hits[:-1]
        covered = np.minimum(gaps, hang).sum() + (ends[-1] - hits[-1])
        counts[j] = covered
    return counts


def active_speech_level(x, rate: int = SAMPLE_RATE) -> float:
    """Active level of ``x`` in dBov."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DataError("active_speech_level expects a non-empty 1-D signal")
    energy = float(np.dot(x, x))
    if energy == 0.0 or not np.isfinite(energy):
        raise DataError("signal is silent (or non-finite); no active level")
    thresholds = 2.0 ** THRESHOLD_EXPONENTS
    counts = _active_counts(_envelope(x, rate), thresholds, max(1, round(HANGOVER * rate)))
    live = counts > 0
    if not np.any(live):
        raise DataError("signal never exceeds the lowest activity threshold")
    a = np.full(thresholds.size, -np.inf)
    a[live] = _db(energy / counts[live])
    diff = a - 20.0 * np.log10(thresholds)
    # diff falls as the threshold rises; find where it drops through the margin
    below = np.flatnonzero(live & (diff <= MARGIN_DB))
    if below.size == 0:
        return float(a[np.flatnonzero(live)[-1]])
    j = below[0]
    if j == 0 or not live[j - 1]:
        return float(a[j])
    frac = (diff[j - 1] - MARGIN_DB) / (diff[j - 1] - diff[j])
    return float(a[j - 1] + frac * (a[j] - a[j - 1]))


def noise_power_db(d) -> float:
    d = np.asarray(d, dtype=np.float64)
    p = float(np.mean(d * d)) if d.size else 0.0
    if p == 0.0:
        raise DataError("noise signal has zero energy")
    return float(_db(p))


@dataclass(frozen=True)
class MixtureExample:
    """Levelled speech, scaled noise and their sum, with the gains that made them."""

    clean: np.ndarray
    noise: np.ndarray
    mixture: np.ndarray
    snr_db: float
    speech_gain: float
    noise_gain: float
    speech_level_dbov: float

    def measured_snr(self, rate: int = SAMPLE_RATE) -> float:
        return active_speech_level(self.clean, rate) - noise_power_db(self.noise)


def fit_noise_length(d, n: int, offset: int = 0) -> np.ndarray:
    """Loop or crop ``d`` to ``n`` samples, starting at ``offset``."""
    d = np.asarray(d, dtype=np.float64)
    if d.size == 0:
        raise DataError("empty noise signal")
    idx = (offset + np.arange(n)) % d.size
    return d[idx]


def level_to(s, target_dbov: float = TARGET_LEVEL_DBOV, rate: int = SAMPLE_RATE,
             tol_db: float = 0.01, max_iter: int = 8) -> tuple[float, float]:
    """Gain bringing ``s`` to ``target_dbov``; returns ``(gain, achieved level)``.

    The meter uses fixed thresholds, so the level is re-measured after each
    gain update until it settles.
    """
    s = np.asarray(s, dtype=np.float64)
    gain = 1.0
    level = active_speech_level(s, rate)
    for _ in range(max_iter):
        if abs(level - target_dbov) <= tol_db:
            break
        gain *= 10.0 ** ((target_dbov - level) / 20.0)
        level = active_speech_level(gain * s, rate)
    return gain, level


def mix_at_snr(s, d, snr_db: float, target_level_dbov: float = TARGET_LEVEL_DBOV,
               rate: int = SAMPLE_RATE, noise_offset: int = 0) -> MixtureExample:
    """Level speech to ``target_level_dbov`` and add noise at ``snr_db``."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise DataError("speech must be 1-D")
    d = fit_noise_length(d, s.size, noise_offset)
    p_noise = noise_power_db(d)
    gs, level = level_to(s, target_level_dbov, rate)
    gd = 10.0 ** ((level - snr_db - p_noise) / 20.0)
    clean, noise = gs * s, gd * d
    return MixtureExample(clean, noise, clean + noise, float(snr_db), float(gs), float(gd),
                          float(level))
