"""Exception types shared across the package."""


class BovstreamError(Exception):
    """Base class for all library errors."""


class ShapeError(BovstreamError):
    """Operand shapes do not conform."""


class NumericsError(BovstreamError):
    """A computation produced NaN or Inf."""


class ConfigError(BovstreamError):
    """Invalid configuration value or unknown key."""


class RangeError(BovstreamError):
    """A noise level lies outside its valid range."""


class OrderError(BovstreamError):
    """Reverse step requested with target level above source level."""


class SingularityError(BovstreamError):
    """Division by a vanishing alpha-bar."""


class DataError(BovstreamError):
    """Source video too short for the requested window."""


class InternalError(BovstreamError):
    """Invariant violation that should be unreachable."""


class CorruptCheckpointError(BovstreamError):
    """Checkpoint bytes fail CRC or structural validation."""


class VersionError(BovstreamError):
    """Checkpoint format version not supported."""
