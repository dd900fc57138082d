"""Exception types shared across the package."""


class SlimnetError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(SlimnetError):
    """Operands have incompatible shapes or channel counts."""


class SliceError(SlimnetError):
    """Prefix-slice extent outside the valid range."""


class ContractError(SlimnetError):
    """An operation was invoked outside its stated contract."""


class ConfigError(SlimnetError):
    """Invalid or inconsistent configuration."""


class NumericError(SlimnetError):
    """Non-finite values where finite ones are required."""


class StatisticsError(SlimnetError):
    """Normalization statistics are missing for the requested width."""


class FormatError(SlimnetError):
    """Malformed data file; carries the byte offset of the problem when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UsageError(SlimnetError):
    """Bad command-line invocation."""
