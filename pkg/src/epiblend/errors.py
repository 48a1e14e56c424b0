"""Exception types mapped onto CLI exit codes."""
from __future__ import annotations


class ConfigurationError(ValueError):
    """A run configuration, prior specification, or flag value is invalid."""


class DataError(ValueError):
    """An input data file cannot be parsed into a usable series."""
