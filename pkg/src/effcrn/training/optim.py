"""Adam and a validation-plateau learning-rate schedule with early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff.tensor import Parameter
from ..exceptions import ConfigError, ShapeError


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


class Adam:
    def __init__(self, params: list[Parameter], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0 or not 0 <= beta1 < 1 or not 0 <= beta2 < 1 or eps <= 0:
            raise ConfigError("invalid Adam hyperparameters")
        self.params = {p.name: p for p in params}
        if len(self.params) != len(params):
            raise ConfigError("parameter names must be unique")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState(
            m={k: np.zeros_like(p.data) for k, p in self.params.items()},
            v={k: np.zeros_like(p.data) for k, p in self.params.items()},
        )

    def step(self) -> None:
        st = self.state
        st.step += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2**st.step) / (1 - b1**st.step)
        eps_hat = self.eps * np.sqrt(1 - b2**st.step)
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
            m, v = st.m[name], st.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            # algebraically the textbook bias-corrected update
            p.data -= (lr_t * m / (np.sqrt(v) + eps_hat)).astype(p.dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


@dataclass
class PlateauSchedule:
    """Decays the learning rate after ``patience`` epochs without improvement.

    ``update(val_loss)`` is called once per finished epoch and returns True
    when training should stop.
    """

    lr: float = 1e-4
    factor: float = 0.6
    patience: int = 4
    min_lr: float = 1e-6
    stop_patience: int = 10
    max_epochs: int = 70
    best: float = float("inf")
    stagnant: int = 0
    since_decay: int = 0
    epoch: int = 0
    reason: str | None = None

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ConfigError("decay factor must lie in (0, 1)")
        if min(self.lr, self.patience, self.min_lr, self.stop_patience, self.max_epochs) <= 0:
            raise ConfigError("schedule settings must be positive")

    def update(self, val_loss: float) -> bool:
        self.epoch += 1
        if val_loss < self.best:
            self.best = val_loss
            self.stagnant = self.since_decay = 0
        else:
            self.stagnant += 1
            self.since_decay += 1
            if self.since_decay >= self.patience:
                self.lr *= self.factor
                self.since_decay = 0
        if self.lr < self.min_lr:
            self.reason = "lr_below_min"
        elif self.stagnant >= self.stop_patience:
            self.reason = "stagnation"
        elif self.epoch >= self.max_epochs:
            self.reason = "max_epochs"
        return self.reason is not None

    @property
    def improved(self) -> bool:
        return self.stagnant == 0
