"""Exception types shared across the package."""


class UTRError(Exception):
    """Base class for all package errors."""


class DimensionError(UTRError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(UTRError, ValueError):
    """A configuration value is missing, inconsistent or out of range."""


class UsageError(UTRError, RuntimeError):
    """An API was called in a way its contract forbids."""


class NonFiniteGradientError(UTRError, FloatingPointError):
    """A gradient contained NaN/inf; carries the offending parameter name."""

    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}; step aborted")
        self.name = name


class NonFiniteLossError(UTRError, FloatingPointError):
    """Training produced a NaN/inf loss."""
