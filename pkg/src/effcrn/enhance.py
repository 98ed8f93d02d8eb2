"""Offline and frame-by-frame enhancement of waveforms."""

from __future__ import annotations

import time

import numpy as np

from .dsp import FrameConfig, bound_and_apply_mask, istft, n_frames, stft
from .exceptions import ShapeError

WARMUP_FRAMES = 10


def enhance_spectrum(model, noisy: np.ndarray) -> np.ndarray:
    """Enhanced spectrum ``(257, L, 2)`` for a whole utterance, zero initial state."""
    mask, _ = model.forward(noisy.astype(model.dtype))
    return bound_and_apply_mask(mask.data.astype(np.float64), noisy)


def enhance_signal(model, y, cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return istft(enhance_spectrum(model, stft(y, cfg)), cfg, length=y.size)


class StreamingEnhancer:
    """Consumes ``shift``-sample blocks and returns enhanced blocks.

    Output lags input by one shift.  Memory is fixed: one analysis window,
    one overlap-add buffer and the recurrent state.
    """

    def __init__(self, model, cfg: FrameConfig = FrameConfig()):
        if cfg.dft_size != 2 * cfg.shift:
            raise ShapeError("streaming assumes 50% overlap")
        self.model, self.cfg = model, cfg
        self.window = cfg.window
        self.reset()

    def reset(self) -> None:
        k = self.cfg.dft_size
        self.state = self.model.init_state(1)
        self.inbuf = np.zeros(k)
        self.outbuf = np.zeros(k)
        self.blocks = 0
        self.frame_times: list[float] = []

    def process(self, block) -> np.ndarray:
        """Push exactly ``shift`` samples; returns ``shift`` samples (zeros while priming)."""
        r = self.cfg.shift
        block = np.asarray(block, dtype=np.float64)
        if block.shape != (r,):
            raise ShapeError(f"expected a block of {r} samples, got {block.shape}")
        self.inbuf[:-r] = self.inbuf[r:]
        self.inbuf[-r:] = block
        self.blocks += 1
        if self.blocks == 1:
            return np.zeros(r)
        t0 = time.perf_counter()
        z = np.fft.rfft(self.inbuf * self.window)
        frame = np.stack([z.real, z.imag], axis=-1)[:, None, :]
        mask, self.state = self.model.forward_frame(frame[None].astype(self.model.dtype),
                                                    self.state)
        est = bound_and_apply_mask(mask.data[0].astype(np.float64), frame)[:, 0]
        self.outbuf += np.fft.irfft(est[:, 0] + 1j * est[:, 1], n=self.cfg.dft_size) * self.window
        self.frame_times.append(time.perf_counter() - t0)
        out = self.outbuf[:r].copy()
        self.outbuf[:-r] = self.outbuf[r:]
        self.outbuf[-r:] = 0.0
        return out

    def tail(self) -> np.ndarray:
        """Overlap-add remainder after the last frame."""
        return self.outbuf[: self.cfg.shift].copy()

    def run(self, y) -> np.ndarray:
        """Stream a whole signal; matches :func:`enhance_signal` sample for sample."""
        y = np.asarray(y, dtype=np.float64)
        r = self.cfg.shift
        count = n_frames(y.size, self.cfg)
        total = (count + 1) * r
        padded = np.zeros(total)
        padded[: y.size] = y
        out = [self.process(padded[i : i + r]) for i in range(0, total, r)]
        out.append(self.tail())
        # first block is priming silence; frame 0 output starts at sample 0
        return np.concatenate(out[1:])[: y.size]

    def timing(self) -> dict:
        """Steady-state cost per frame, ignoring the first few frames."""
        steady = self.frame_times[WARMUP_FRAMES:] or self.frame_times
        ms = 1e3 * float(np.mean(steady)) if steady else float("nan")
        hop_ms = 1e3 * self.cfg.shift / self.cfg.sample_rate
        return {"frames": len(self.frame_times), "ms_per_frame": ms,
                "real_time_factor": ms / hop_ms}
