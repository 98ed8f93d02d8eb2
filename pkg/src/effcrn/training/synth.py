"""Synthetic stand-in corpus: harmonic tone 'speech' and spectrally shaped noise."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from ..dsp import SAMPLE_RATE
from ..wavio import write_wav

SNR_CYCLE = (0.0, 5.0, 10.0)


def tone_utterance(rng: np.random.Generator, n: int, rate: int = SAMPLE_RATE) -> np.ndarray:
    """Voiced-like signal: a few harmonics of a gliding f0 under a syllabic envelope."""
    t = np.arange(n) / rate
    f0 = rng.uniform(110, 240) * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.3, 1.2) * t))
    phase = 2 * np.pi * np.cumsum(f0) / rate
    x = np.zeros(n)
    for h in range(1, 7):
        x += rng.uniform(0.3, 1.0) / h * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    syllable = 0.5 * (1 - np.cos(2 * np.pi * rng.uniform(2.5, 4.5) * t))
    return 0.3 * x * (0.15 + 0.85 * syllable)


def shaped_noise(rng: np.random.Generator, n: int, kind: int = 0) -> np.ndarray:
    """White noise through a one-pole low-pass (kind 0), high-pass (1) or none (2)."""
    w = rng.standard_normal(n)
    if kind % 3 == 0:
        w = lfilter([1.0], [1.0, -0.9], w)
    elif kind % 3 == 1:
        w = lfilter([1.0, -0.7], [1.0], w)
    return 0.1 * w / np.std(w)


def synthetic_pairs(count: int, n_samples: int, seed: int = 0):
    """``count`` (speech, noise, snr_db) triples, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    return [(tone_utterance(rng, n_samples), shaped_noise(rng, n_samples, i),
             SNR_CYCLE[i % len(SNR_CYCLE)]) for i in range(count)]


def write_corpus(out_dir, n_train: int = 10, n_val: int = 2, seconds: float = 1.65,
                 seed: int = 0) -> Path:
    """Write clean/ and noise/ WAVs plus ``manifest.txt``; returns the manifest path."""
    out = Path(out_dir)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "noise").mkdir(parents=True, exist_ok=True)
    n = int(round(seconds * SAMPLE_RATE))
    lines = ["# clean noise snr_db split"]
    for i, (s, d, snr) in enumerate(synthetic_pairs(n_train + n_val, n, seed)):
        write_wav(out / "clean" / f"utt{i:03d}.wav", s, fmt="float")
        write_wav(out / "noise" / f"noise{i:03d}.wav", d, fmt="float")
        split = "train" if i < n_train else "val"
        lines.append(f"clean/utt{i:03d}.wav noise/noise{i:03d}.wav {snr:g} {split}")
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
