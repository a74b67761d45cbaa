"""Exception hierarchy for qipfseg."""


class QipfsegError(Exception):
    """Base class for all qipfseg errors."""


class DegenerateSamples(QipfsegError):
    """Sample set has no spread (or too few rows) for bandwidth selection."""


class DimensionMismatch(QipfsegError):
    """Evaluation point dimension does not match the sample dimension."""


class NonFiniteInput(QipfsegError):
    """An input array contains NaN or infinity."""


class OrderTooLarge(QipfsegError):
    """Requested Hermite order exceeds the overflow guard."""


class DegenerateField(QipfsegError):
    """Field normalizer is zero; wave function cannot be normalized."""


class InvalidConfig(QipfsegError):
    """Bad experiment or scene configuration."""


class OutOfBounds(QipfsegError):
    """Pixel coordinate outside the image."""


class NonFiniteLoss(QipfsegError):
    """Training loss diverged to NaN or infinity."""


class InvalidPasses(QipfsegError):
    """MC-dropout pass count below the minimum of 2."""


class HeterogeneousEnsemble(QipfsegError):
    """Ensemble members do not share one architecture."""


class ShapeMismatch(QipfsegError):
    """Two per-pixel or per-patch maps have different shapes."""


class InvalidPatch(QipfsegError):
    """Patch size is not a positive integer."""


class InvalidRange(QipfsegError):
    """u_max < u_min in a threshold computation."""


class BadMagic(QipfsegError):
    """Tensor file does not start with the FTEN magic bytes."""


class TruncatedFile(QipfsegError):
    """Tensor file is shorter than its header claims."""


class DimensionOverflow(QipfsegError):
    """Tensor rank or dimension does not fit the 32-bit header fields."""


class IoFailure(QipfsegError):
    """Filesystem write failed."""
