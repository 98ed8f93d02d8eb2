"""STFT analysis/synthesis and bounded complex masking.

Spectra are stored as real arrays shaped ``(bins, frames, 2)`` holding the
real and imaginary parts of the non-redundant DFT bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff.tensor import Tensor, as_tensor, record
from .exceptions import ShapeError, UsageError

SAMPLE_RATE = 16_000


@dataclass(frozen=True)
class FrameConfig:
    dft_size: int = 512
    shift: int = 256
    sample_rate: int = SAMPLE_RATE

    @property
    def bins(self) -> int:
        return self.dft_size // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return sqrt_hann(self.dft_size)

    @property
    def warmup(self) -> int:
        """Samples at either edge that lack full overlap-add support."""
        return self.dft_size - self.shift


def sqrt_hann(n: int) -> np.ndarray:
    """Square root of the periodic Hann window; its square sums to 1 at 50% overlap."""
    k = np.arange(n)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * k / n))


def n_frames(n_samples: int, cfg: FrameConfig = FrameConfig()) -> int:
    if n_samples <= cfg.dft_size:
        return 1
    return 1 + -(-(n_samples - cfg.dft_size) // cfg.shift)


def stft(signal, cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    """Windowed DFT of every frame; returns ``(K/2+1, L, 2)`` float64."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"stft expects a mono 1-D signal, got shape {x.shape}")
    if x.size == 0:
        raise UsageError("stft of an empty signal")
    if not np.all(np.isfinite(x)):
        raise UsageError("signal contains non-finite samples")
    k, r = cfg.dft_size, cfg.shift
    count = n_frames(x.size, cfg)
    padded = np.zeros((count - 1) * r + k)
    padded[: x.size] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, k)[::r][:count]
    spec = np.fft.rfft(frames * cfg.window, axis=-1)  # (L, bins)
    return np.stack([spec.real.T, spec.imag.T], axis=-1)


def istft(spec, cfg: FrameConfig = FrameConfig(), length: int | None = None) -> np.ndarray:
    """Inverse of :func:`stft` by synthesis windowing and overlap-add."""
    spec = np.asarray(spec, dtype=np.float64)
    if spec.ndim != 3 or spec.shape[0] != cfg.bins or spec.shape[2] != 2:
        raise ShapeError(f"expected ({cfg.bins}, L, 2) spectrum, got {spec.shape}")
    k, r = cfg.dft_size, cfg.shift
    count = spec.shape[1]
    frames = np.fft.irfft(spec[..., 0].T + 1j * spec[..., 1].T, n=k, axis=-1) * cfg.window
    out = np.zeros((count - 1) * r + k)
    for i in range(k // r):
        # frames i, i + k/r, ... never overlap each other
        sel = frames[i :: k // r]
        starts = (np.arange(i, count, k // r) * r)[:, None] + np.arange(k)
        out[starts.reshape(-1)] += sel.reshape(-1)
    if length is not None:
        out = out[:length] if length <= out.size else np.pad(out, (0, length - out.size))
    return out


def to_complex(spec: np.ndarray) -> np.ndarray:
    spec = np.asarray(spec)
    return spec[..., 0] + 1j * spec[..., 1]


def from_complex(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1)


# -- bounded mask ------------------------------------------------------------

_SERIES_BELOW = 1e-4


def _bound_factors(mag: np.ndarray):
    """``t = tanh(m)/m`` and ``dt/dm / m``, both finite at ``m = 0``."""
    small = mag < _SERIES_BELOW
    safe = np.where(small, 1.0, mag)
    th = np.tanh(safe)
    t = np.where(small, 1.0 - mag**2 / 3.0, th / safe)
    sech2 = 1.0 - th * th
    dt_over_m = np.where(small, -2.0 / 3.0 + 8.0 * mag**2 / 15.0,
                         (sech2 * safe - th) / safe**3)
    return t, dt_over_m


def bound_mask(g_raw) -> Tensor:
    """Bound a complex mask to unit magnitude, keeping its phase.

    ``G' = tanh(|G|) * G / |G|`` with ``G' = 0`` at ``G = 0``; the last axis
    holds (real, imag).  Differentiable on the tape.
    """
    g = as_tensor(g_raw)
    gv = g.data.astype(np.float64)
    re, im = gv[..., 0], gv[..., 1]
    mag = np.hypot(re, im)
    t, dt_over_m = _bound_factors(mag)
    out = (gv * t[..., None]).astype(g.dtype)
    # rounding can push a saturated magnitude a few ulps past 1
    norm = np.hypot(out[..., 0], out[..., 1])
    if np.any(norm > 1):
        out /= np.maximum(norm, 1)[..., None].astype(out.dtype)

    def backward(up):
        up = up.astype(np.float64)
        # J = t I + (dt/dm / m) G G^T  (symmetric)
        proj = up[..., 0] * re + up[..., 1] * im
        grad = up * t[..., None] + gv * (dt_over_m * proj)[..., None]
        return [grad.astype(g.dtype)]

    return record(out, [g], backward)


def apply_mask(mask, noisy) -> Tensor:
    """Complex product ``mask * noisy`` on (real, imag) pairs; ``noisy`` is constant."""
    m = as_tensor(mask)
    y = np.asarray(noisy.data if isinstance(noisy, Tensor) else noisy, dtype=m.dtype)
    if y.shape != m.shape:
        raise ShapeError(f"mask {m.shape} and spectrum {y.shape} differ")
    a, b = m.data[..., 0], m.data[..., 1]
    c, d = y[..., 0], y[..., 1]
    out = np.stack([a * c - b * d, a * d + b * c], axis=-1)

    def backward(up):
        ur, ui = up[..., 0], up[..., 1]
        return [np.stack([ur * c + ui * d, ui * c - ur * d], axis=-1)]

    return record(out, [m], backward)


def bound_and_apply_mask(g_raw, noisy):
    """Bound the raw mask and apply it; returns the enhanced spectrum.

    Works on plain arrays (returns an array) or on tape tensors (returns a
    Tensor).
    """
    as_array = not isinstance(g_raw, Tensor)
    out = apply_mask(bound_mask(g_raw), noisy)
    return out.data if as_array else out
