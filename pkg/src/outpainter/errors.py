"""Exception types shared across the package."""


class OutpainterError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(OutpainterError, ValueError):
    """Invalid configuration value, unknown key, or unusable input directory."""


class ShapeError(OutpainterError, ValueError):
    """A tensor or image does not have the expected shape."""


class NonFiniteLossError(OutpainterError, FloatingPointError):
    """A loss term became NaN or infinite during training."""


class CheckpointError(OutpainterError):
    """A checkpoint file is missing, corrupt, or has an incompatible version."""
