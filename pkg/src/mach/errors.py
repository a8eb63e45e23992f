"""Exception hierarchy shared by the library and the CLI."""


class MachError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MachError, ValueError):
    """Invalid configuration or argument (bad B, R, delta, k, ...)."""


class ValidationError(MachError, ValueError):
    """Data does not satisfy the model's contract (dimension, label range, mode)."""


class ParseError(ValidationError):
    """Malformed text input. Carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(MachError):
    """Corrupt, truncated or unsupported binary model file."""
