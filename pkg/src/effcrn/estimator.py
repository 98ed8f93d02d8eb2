"""scikit-learn style wrapper: fit on (noisy, clean) waveform pairs, transform noisy audio."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .enhance import enhance_signal
from .topology import build_model, canonical_name
from .training.data import SegmentSet
from .training.loss import LossConfig
from .training.metrics import delta_snr
from .training.mixing import MixtureExample
from .training.trainer import TrainConfig, train
from .validation import check_pairs, check_waveforms


def _pair_example(noisy: np.ndarray, clean: np.ndarray) -> MixtureExample:
    return MixtureExample(clean, noisy - clean, noisy, float("nan"), 1.0, 1.0, float("nan"))


class SpeechEnhancer(TransformerMixin, BaseEstimator):
    """Complex-mask speech enhancer.

    ``fit(X, y)`` takes noisy signals ``X`` and aligned clean signals ``y``
    (16 kHz, float in [-1, 1]).  ``transform`` returns enhanced signals of
    the same lengths.  ``score`` is the mean SNR improvement in dB.
    """

    def __init__(self, variant="EffCRN23lite", lr=1e-4, batch_size=16, seq_len=100,
                 max_epochs=70, max_steps=None, compression=0.3, alpha=0.3, seed=0):
        self.variant = variant
        self.lr = lr
        self.batch_size = batch_size
        self.seq_len = seq_len
        self.max_epochs = max_epochs
        self.max_steps = max_steps
        self.compression = compression
        self.alpha = alpha
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(seq_len=self.seq_len, batch_size=self.batch_size, lr=self.lr,
                           max_epochs=self.max_epochs, max_steps=self.max_steps, seed=self.seed,
                           loss=LossConfig(self.compression, self.alpha))

    def fit(self, X, y):
        noisy, clean = check_pairs(X, y)
        cfg = self._train_config()
        model = build_model(canonical_name(self.variant), seed=self.seed)
        data = SegmentSet([_pair_example(a, b) for a, b in zip(noisy, clean)], cfg.seq_len)
        result = train(model, data, None, cfg)
        model.load_state_dict(result.best_state)
        self.model_ = model
        self.history_ = result.history
        self.n_steps_ = result.steps
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return [enhance_signal(self.model_, x) for x in check_waveforms(X)]

    def predict(self, X):
        return self.transform(X)

    def score(self, X, y):
        noisy, clean = check_pairs(X, y)
        enhanced = self.transform(noisy)
        return float(np.mean([delta_snr(s, n, e).delta
                              for s, n, e in zip(clean, noisy, enhanced)]))
