"""Manifest parsing, on-the-fly mixing and fixed-length spectral segments."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ..dsp import FrameConfig, stft
from ..exceptions import DataError, UsageError
from ..wavio import read_wav
from .mixing import TARGET_LEVEL_DBOV, MixtureExample, mix_at_snr

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestEntry:
    clean: Path
    noise: Path
    snr_db: float
    split: str
    line: int


def parse_manifest(path) -> list[ManifestEntry]:
    """Read ``clean noise snr_db split`` lines; relative paths resolve against the file.

    Blank lines and ``#`` comments are skipped.  Errors name the offending line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest ({exc})") from exc
    entries = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise DataError(f"{path}:{no}: expected 4 fields (clean noise snr_db split), "
                            f"got {len(fields)}")
        clean, noise, snr, split = fields
        try:
            snr_db = float(snr)
        except ValueError:
            raise DataError(f"{path}:{no}: SNR {snr!r} is not a number") from None
        if not np.isfinite(snr_db):
            raise DataError(f"{path}:{no}: SNR must be finite")
        if split not in SPLITS:
            raise DataError(f"{path}:{no}: split {split!r} not one of {SPLITS}")
        entries.append(ManifestEntry(path.parent / clean, path.parent / noise, snr_db, split, no))
    return entries


def _mix_entry(args) -> MixtureExample:
    entry, seed, level = args
    speech, _ = read_wav(entry.clean)
    noise, _ = read_wav(entry.noise)
    # per-entry stream keeps the result independent of worker scheduling
    offset = int(np.random.default_rng([seed, entry.line]).integers(max(noise.size, 1)))
    try:
        return mix_at_snr(speech, noise, entry.snr_db, level, noise_offset=offset)
    except DataError as exc:
        raise DataError(f"manifest line {entry.line}: {exc}") from exc


def load_mixtures(entries: Sequence[ManifestEntry], seed: int = 0, workers: int = 1,
                  target_level_dbov: float = TARGET_LEVEL_DBOV) -> list[MixtureExample]:
    """Mix every entry; output order always follows the manifest."""
    jobs = [(e, seed, target_level_dbov) for e in entries]
    if workers <= 1:
        return [_mix_entry(j) for j in jobs]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(_mix_entry, jobs))


class SegmentSet:
    """Noisy/clean spectra cut into ``seq_len``-frame segments.

    Arrays are ``(N, 257, seq_len, 2)``.  Utterances shorter than one segment
    are zero-padded; a trailing partial segment of a longer one is dropped.
    """

    def __init__(self, examples: Sequence[MixtureExample], seq_len: int = 100,
                 cfg: FrameConfig = FrameConfig(), dtype=np.float32):
        if seq_len < 1:
            raise UsageError("seq_len must be positive")
        self.examples = list(examples)
        self.seq_len = seq_len
        self.cfg = cfg
        noisy, clean = [], []
        for ex in self.examples:
            y, s = stft(ex.mixture, cfg), stft(ex.clean, cfg)
            n_seg = max(1, y.shape[1] // seq_len)
            if y.shape[1] < seq_len:
                pad = ((0, 0), (0, seq_len - y.shape[1]), (0, 0))
                y, s = np.pad(y, pad), np.pad(s, pad)
            for k in range(n_seg):
                sl = slice(k * seq_len, (k + 1) * seq_len)
                noisy.append(y[:, sl])
                clean.append(s[:, sl])
        shape = (0, cfg.bins, seq_len, 2)
        self.noisy = np.stack(noisy).astype(dtype) if noisy else np.zeros(shape, dtype)
        self.clean = np.stack(clean).astype(dtype) if clean else np.zeros(shape, dtype)

    def __len__(self) -> int:
        return self.noisy.shape[0]

    def batches(self, batch_size: int, rng: np.random.Generator | None = None
                ) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Shuffled when ``rng`` is given, in order otherwise; last batch may be short."""
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for i in range(0, len(order), batch_size):
            idx = order[i : i + batch_size]
            yield self.noisy[idx], self.clean[idx]


def datasets_from_manifest(path, seq_len: int = 100, seed: int = 0, workers: int = 1
                           ) -> dict[str, SegmentSet]:
    entries = parse_manifest(path)
    if not entries:
        raise DataError(f"{path}: manifest has no entries")
    mixtures = load_mixtures(entries, seed, workers)
    out = {}
    for split in SPLITS:
        chosen = [m for m, e in zip(mixtures, entries) if e.split == split]
        if chosen:
            out[split] = SegmentSet(chosen, seq_len)
    return out
