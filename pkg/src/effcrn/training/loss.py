"""Power-law compressed magnitude + complex spectral loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff.tensor import Tensor, as_tensor, record
from ..exceptions import ConfigError, UsageError


@dataclass(frozen=True)
class LossConfig:
    compression: float = 0.3
    alpha: float = 0.3  # weight of the complex term; 1 - alpha goes to magnitudes
    floor: float = 1e-12

    def __post_init__(self):
        if not 0.0 < self.compression <= 1.0:
            raise ConfigError("compression must lie in (0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.floor <= 0:
            raise ConfigError("floor must be positive")


def _compress(z: np.ndarray, c: float, floor: float):
    mag = np.hypot(z[..., 0], z[..., 1])
    mf = np.maximum(mag, floor)
    scale = mf ** (c - 1.0)
    # the floor guards the phase factor only; |0|^c stays exactly 0
    return mag, mf, mag**c, z * scale[..., None], scale


def compressed_loss(estimate, clean, cfg: LossConfig = LossConfig()) -> Tensor:
    """Mean over utterances, frames and bins of

    ``(1 - a) (|S^|^c - |S|^c)^2 + a | |S^|^c e^{j phi^} - |S|^c e^{j phi} |^2``

    on spectra laid out ``(..., 2)`` = (real, imag).  ``clean`` is constant.
    Magnitudes are floored at ``cfg.floor`` inside the phase factor and the
    gradient, so zero bins stay finite.
    """
    est = as_tensor(estimate)
    ref = np.asarray(clean.data if isinstance(clean, Tensor) else clean, dtype=np.float64)
    if ref.shape != est.shape or est.shape[-1] != 2:
        raise UsageError(f"loss shapes differ: {est.shape} vs {ref.shape}")
    c, a = cfg.compression, cfg.alpha
    z = est.data.astype(np.float64)
    mag, mf, p_est, comp_est, scale = _compress(z, c, cfg.floor)
    _, _, p_ref, comp_ref, _ = _compress(ref, c, cfg.floor)
    d_mag = p_est - p_ref
    resid = comp_est - comp_ref
    count = d_mag.size
    value = ((1 - a) * np.sum(d_mag**2) + a * np.sum(resid**2)) / count

    def backward(up):
        live = mag > cfg.floor
        m = np.where(live, mag, 1.0)
        # d|z|^c / dz = c m^(c-2) z ; compressed Jacobian = m^(c-1) I + (c-1) m^(c-3) z z^T
        g_mag = np.where(live, (1 - a) * d_mag * c * m ** (c - 2.0), 0.0)[..., None] * z
        proj = resid[..., 0] * z[..., 0] + resid[..., 1] * z[..., 1]
        g_cmp = a * (resid * scale[..., None]
                     + z * np.where(live, (c - 1.0) * m ** (c - 3.0) * proj, 0.0)[..., None])
        grad = (2.0 / count) * float(up) * (g_mag + g_cmp)
        return [grad.astype(est.dtype)]

    return record(np.asarray(value, dtype=est.dtype), [est], backward)
