"""Exception types shared across the package."""


class WeaveCountError(Exception):
    """Base class for all weavecount errors."""


class ImageFormatError(WeaveCountError):
    """Unreadable, multi-channel, or otherwise unsupported raster input."""


class MissingMetadataError(WeaveCountError):
    """Required resolution (ppc) metadata absent from flag and sidecar."""


class NoDynamicRangeError(WeaveCountError):
    """Constant image: clipping/rescaling is undefined."""


class NoDominantFrequencyError(WeaveCountError):
    """Spectrum has no peak above the noise floor in the search band."""
