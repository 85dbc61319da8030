"""Exception types shared across the package.

The CLI maps these onto stable exit codes: configuration problems are
usage errors (1), malformed or missing data is a data error (2), and
linear-algebra breakdowns are numerical failures (3).
"""


class DmimoError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DmimoError):
    """Invalid or inconsistent configuration (unknown keys, bad values)."""


class GeometryError(DmimoError):
    """Invalid geometry: singular distances, non-collinear arrays, etc."""


class PlacementError(DmimoError):
    """UE placement rejection budget exhausted."""


class PrecodingError(DmimoError):
    """Base class for precoder construction failures."""


class DegenerateChannelError(PrecodingError):
    """Zero channel vector where a direction is required."""


class RankDeficiencyError(PrecodingError):
    """Matrix does not have full column rank where an inverse is needed."""


class FullySuppressedError(PrecodingError):
    """Orthogonalization removed the entire precoding vector."""


class InformationError(ConfigError):
    """A precoder requested CSI or location data it was not granted."""


class DataError(DmimoError):
    """Base class for dataset / calibration data problems."""


class NoDataError(DataError):
    """An operation received an empty sample or grid slice."""


class UnidentifiableError(DataError):
    """Phase offset cannot be estimated (zero-magnitude phasor sum)."""


class CoverageError(DataError):
    """A phase-offset table does not cover every antenna pair in a grid."""


class DatasetFormatError(DataError):
    """Malformed dataset files (parse errors, version or consistency)."""
