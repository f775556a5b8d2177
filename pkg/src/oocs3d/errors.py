"""Exception taxonomy shared by the whole package.

The CLI maps these onto exit codes: configuration problems exit 2,
file/OS problems exit 3, data-dependent numeric failures exit 4.
"""


class OocsError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(OocsError):
    """Invalid configuration detectable before touching any data."""


class DimensionError(OocsError):
    """Array shapes or spacings inconsistent with the requested operation."""


class InvalidKernelError(ConfigError):
    """Kernel size or kernel parameters outside the supported set."""


class DomainError(OocsError):
    """Numeric parameter outside its mathematical domain."""


class DegenerateKernelError(DomainError):
    """A raw kernel without both positive and negative entries cannot be balanced."""


class NormalizationError(DomainError):
    """Zero-variance input cannot be z-scored."""


class ResampleError(DomainError):
    """Resampling would produce a degenerate (zero-sized) volume."""


class UndefinedDistanceError(DomainError):
    """Hausdorff distance is undefined when either mask is empty."""


class VolumeIoError(OocsError):
    """Base class for file-format problems."""


class UnsupportedFormatError(VolumeIoError):
    """File uses a feature outside the supported format subset."""


class CorruptFileError(VolumeIoError):
    """Header and payload disagree, or the payload is unreadable."""


class RangeError(VolumeIoError):
    """Values do not fit the requested on-disk element type."""
