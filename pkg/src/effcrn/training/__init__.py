"""Loss, mixing, optimisation and the training loop."""

from .data import ManifestEntry, SegmentSet, datasets_from_manifest, load_mixtures, parse_manifest
from .loss import LossConfig, compressed_loss
from .metrics import SNRGain, delta_snr
from .mixing import MixtureExample, active_speech_level, mix_at_snr
from .optim import Adam, AdamState, PlateauSchedule
from .trainer import TrainConfig, TrainResult, evaluate_loss, mean_delta_snr, train

__all__ = [
    "Adam", "AdamState", "LossConfig", "ManifestEntry", "MixtureExample", "PlateauSchedule",
    "SNRGain", "SegmentSet", "TrainConfig", "TrainResult", "active_speech_level",
    "compressed_loss", "datasets_from_manifest", "delta_snr", "evaluate_loss", "load_mixtures",
    "mean_delta_snr", "mix_at_snr", "parse_manifest", "train",
]
