"""Shared exception types."""


class FeatclashError(Exception):
    """Base class for all harness errors."""


class ConfigError(FeatclashError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class UnsatisfiableTargetError(FeatclashError):
    """Rejection sampling could not realize the requested feature pattern."""


class DivergenceError(FeatclashError):
    """Training loss became non-finite (CLI exit code 4)."""


class DataFormatError(FeatclashError):
    """A serialized dataset record failed to parse."""
