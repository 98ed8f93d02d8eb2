"""Minibatch BPTT training with plateau schedule and best-model retention."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..autodiff.tensor import Tape
from ..dsp import bound_and_apply_mask
from ..enhance import enhance_signal
from ..exceptions import ConfigError, TrainingError, UsageError
from .data import SegmentSet
from .loss import LossConfig, compressed_loss
from .metrics import delta_snr
from .optim import Adam, PlateauSchedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    seq_len: int = 100
    batch_size: int = 16
    lr: float = 1e-4
    decay: float = 0.6
    patience: int = 4
    min_lr: float = 1e-6
    stop_patience: int = 10
    max_epochs: int = 70
    seed: int = 0
    max_steps: int | None = None
    val_snr_utterances: int = 4
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        ints = (self.seq_len, self.batch_size, self.patience, self.stop_patience, self.max_epochs)
        if min(ints) < 1 or self.lr <= 0 or self.min_lr <= 0:
            raise ConfigError("training settings must be positive")
        if not 0 < self.decay < 1:
            raise ConfigError("decay must lie in (0, 1)")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = asdict(self.loss)
        return d


@dataclass
class TrainResult:
    history: list[dict]
    step_losses: list[float]
    best_state: dict[str, np.ndarray]
    best_epoch: int
    best_val_loss: float
    steps: int
    stop_reason: str


def batch_loss(model, noisy: np.ndarray, clean: np.ndarray, cfg: LossConfig):
    """Loss tensor for one batch; every sequence starts from zero state."""
    mask, _ = model.forward(noisy)
    est = bound_and_apply_mask(mask, noisy)
    return compressed_loss(est, clean, cfg)


def evaluate_loss(model, data: SegmentSet, cfg: LossConfig = LossConfig(),
                  batch_size: int = 16) -> float:
    """Segment-weighted mean loss without recording gradients."""
    total, count = 0.0, 0
    for noisy, clean in data.batches(batch_size):
        total += batch_loss(model, noisy, clean, cfg).item() * len(noisy)
        count += len(noisy)
    if count == 0:
        raise UsageError("cannot evaluate on an empty dataset")
    return total / count


def mean_delta_snr(model, examples) -> float:
    gains = [delta_snr(ex.clean, ex.mixture, enhance_signal(model, ex.mixture)).delta
             for ex in examples]
    return float(np.mean(gains)) if gains else float("nan")


def train_step(model, opt: Adam, noisy, clean, cfg: LossConfig) -> float:
    with Tape() as tape:
        loss = batch_loss(model, noisy, clean, cfg)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at optimizer step {opt.state.step + 1}")
        tape.backward(loss)
    opt.step()
    opt.zero_grad()
    return value


def train(model, train_set: SegmentSet, val_set: SegmentSet | None, cfg: TrainConfig = TrainConfig(),
          log_path=None, on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Train ``model`` in place and return the history plus the best-validation weights.

    Without a validation set the training loss drives the schedule.
    ``cfg.max_steps`` caps the total number of optimizer steps.
    """
    if len(train_set) == 0:
        raise UsageError("training set is empty")
    if val_set is not None and len(val_set) == 0:
        val_set = None
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.lr)
    sched = PlateauSchedule(cfg.lr, cfg.decay, cfg.patience, cfg.min_lr, cfg.stop_patience,
                            cfg.max_epochs)
    snr_examples = (val_set or train_set).examples[: cfg.val_snr_utterances]
    history, step_losses = [], []
    best_state, best_epoch, best_val = model.state_dict(), 0, float("inf")
    sink = open(log_path, "w") if log_path else None
    stop_reason = "max_epochs"
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            t0 = time.perf_counter()
            opt.lr = sched.lr
            losses = []
            for noisy, clean in train_set.batches(cfg.batch_size, rng):
                losses.append(train_step(model, opt, noisy, clean, cfg.loss))
                step_losses.append(losses[-1])
                if cfg.max_steps is not None and len(step_losses) >= cfg.max_steps:
                    break
            train_loss = float(np.mean(losses))
            val_loss = (evaluate_loss(model, val_set, cfg.loss, cfg.batch_size)
                        if val_set is not None else train_loss)
            record = {"epoch": epoch, "steps": len(step_losses), "lr": opt.lr,
                      "train_loss": train_loss, "val_loss": val_loss,
                      "val_delta_snr_db": mean_delta_snr(model, snr_examples),
                      "seconds": time.perf_counter() - t0}
            if val_loss < best_val:
                best_val, best_epoch, best_state = val_loss, epoch, model.state_dict()
            done = sched.update(val_loss)
            history.append(record)
            log.info("epoch %d loss %.5f val %.5f lr %.2e", epoch, train_loss, val_loss, opt.lr)
            if sink:
                sink.write(json.dumps(record) + "\n")
                sink.flush()
            if on_epoch:
                on_epoch(record)
            if cfg.max_steps is not None and len(step_losses) >= cfg.max_steps:
                stop_reason = "max_steps"
                break
            if done:
                stop_reason = sched.reason
                break
    finally:
        if sink:
            sink.close()
    return TrainResult(history, step_losses, best_state, best_epoch, best_val,
                       len(step_losses), stop_reason)
