class TrainerError(Exception):
    """Base class for trainer errors."""


class ManifestMismatch(TrainerError):
    """Dataset manifest disagrees with the files on disk."""


class ModelLoadError(TrainerError):
    """Unknown base model id or incompatible adapter weights."""


class ShapeMismatch(TrainerError):
    """Tensor shapes disagree with the package contract."""
