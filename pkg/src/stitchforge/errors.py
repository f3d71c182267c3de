"""Exception hierarchy shared across the pipeline."""


class StitchForgeError(Exception):
    """Base class for all pipeline errors."""


class NonInvertibleHomography(StitchForgeError):
    """Homography matrix is singular or numerically non-invertible."""


class DegenerateProjection(StitchForgeError):
    """A corner projects behind the camera plane (w <= 0) or cannot be normalized."""


class DimensionMismatch(StitchForgeError):
    """Rasters that must share dimensions do not."""


class EmptyMask(StitchForgeError):
    """A binary mask with required non-empty support has no set pixels."""


class EmptyDistribution(StitchForgeError):
    """Mask distribution contains no pairs."""


class EmptyInput(StitchForgeError):
    """An input corpus or directory yields no usable samples."""


class NotThreeChannel(StitchForgeError):
    """Operation requires an H x W x 3 image."""


class AllUnknown(StitchForgeError):
    """Inpainting called with an empty known mask: nothing to propagate from."""


class IoError(StitchForgeError):
    """Filesystem read/write failure at the pipeline level."""


class ManifestMismatch(StitchForgeError):
    """Dataset manifest disagrees with the files on disk."""


class ChecksumMismatch(StitchForgeError):
    """Stored checksum does not match file content."""


class TooSmall(StitchForgeError):
    """Image smaller than the metric's window size."""


class Unparseable(StitchForgeError):
    """Evaluator response contains no extractable scores; eligible for retry."""


class ExhaustedRetries(StitchForgeError):
    """All configured request attempts failed."""


class AuthError(StitchForgeError):
    """Missing or rejected API credential."""


class TransportError(StitchForgeError):
    """Network-level or HTTP-level request failure."""


class ConstantInput(StitchForgeError):
    """Correlation undefined for a zero-variance input."""


class LengthMismatch(StitchForgeError):
    """Paired score lists differ in length."""


class IdMismatch(StitchForgeError):
    """Machine and human score files do not cover the same sample ids."""
