"""Efficient convolutional recurrent networks for single-channel speech enhancement."""

from .dsp import FrameConfig, bound_and_apply_mask, istft, stft
from .enhance import StreamingEnhancer, enhance_signal
from .estimator import SpeechEnhancer
from .exceptions import (BuildError, ConfigError, DataError, EffCRNError, LoadError, ShapeError,
                         TrainingError, UsageError)
from .topology import (apply_variant, build_model, count_flops_per_frame, count_params,
                       describe_layers, load_checkpoint, save_checkpoint, variant_spec)

__version__ = "0.1.0"

__all__ = [
    "BuildError", "ConfigError", "DataError", "EffCRNError", "FrameConfig", "LoadError",
    "ShapeError", "SpeechEnhancer", "StreamingEnhancer", "TrainingError", "UsageError",
    "apply_variant", "bound_and_apply_mask", "build_model", "count_flops_per_frame",
    "count_params", "describe_layers", "enhance_signal", "istft", "load_checkpoint",
    "save_checkpoint", "stft", "variant_spec",
]
