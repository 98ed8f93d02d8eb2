"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import DataError, ShapeError


def check_waveform(x, name: str = "signal", min_length: int = 1) -> np.ndarray:
    """Return ``x`` as a finite float64 1-D array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size < min_length:
        raise DataError(f"{name} has {arr.size} samples, need at least {min_length}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite samples")
    return arr


def check_waveforms(X, name: str = "X") -> list[np.ndarray]:
    """Accept one signal or a sequence of signals; always returns a list."""
    if isinstance(X, np.ndarray) and X.ndim == 1:
        X = [X]
    try:
        items = list(X)
    except TypeError:
        raise ShapeError(f"{name} must be a signal or a sequence of signals") from None
    if not items:
        raise DataError(f"{name} is empty")
    return [check_waveform(x, f"{name}[{i}]") for i, x in enumerate(items)]


def check_pairs(X, y) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Noisy/clean lists of matching lengths."""
    noisy, clean = check_waveforms(X, "X"), check_waveforms(y, "y")
    if len(noisy) != len(clean):
        raise ShapeError(f"{len(noisy)} noisy signals but {len(clean)} clean ones")
    for i, (a, b) in enumerate(zip(noisy, clean)):
        if a.shape != b.shape:
            raise ShapeError(f"pair {i}: noisy has {a.size} samples, clean has {b.size}")
    return noisy, clean


def check_spectrum(spec, bins: int = 257) -> np.ndarray:
    arr = np.asarray(spec)
    if arr.ndim not in (3, 4) or arr.shape[-3] != bins or arr.shape[-1] != 2:
        raise ShapeError(f"expected (..., {bins}, frames, 2) spectrum, got {arr.shape}")
    return arr
