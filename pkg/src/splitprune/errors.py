"""Exception types shared across the package."""


class SplitpruneError(Exception):
    """Base class for all errors raised by this package."""


class NotFoundError(SplitpruneError):
    """A named resource (preset, table entry, file) does not exist."""


class DomainError(SplitpruneError):
    """An argument violates a documented precondition."""


class ParseError(SplitpruneError):
    """A structured text input could not be parsed; message carries the line."""


class RefusedError(SplitpruneError):
    """An operation was refused because it would exceed a configured budget."""


class ConfigError(SplitpruneError):
    """A run configuration is malformed or inconsistent."""
