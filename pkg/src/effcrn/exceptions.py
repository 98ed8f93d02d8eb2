"""Exception hierarchy shared by all subpackages."""


class EffCRNError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(EffCRNError, ValueError):
    """Tensor shapes or channel counts do not line up."""


class ConfigError(EffCRNError, ValueError):
    """Invalid hyperparameter, variant name or change set."""


class BuildError(EffCRNError, ValueError):
    """A model description cannot be turned into a consistent layer graph."""


class UsageError(EffCRNError, RuntimeError):
    """An API was called in a state where it cannot work."""


class LoadError(EffCRNError, OSError):
    """A checkpoint or model file is missing, corrupt or incompatible."""


class DataError(EffCRNError, ValueError):
    """Audio or manifest content is unusable (silent, malformed, wrong rate)."""


class TrainingError(EffCRNError, RuntimeError):
    """Training diverged or cannot proceed."""
