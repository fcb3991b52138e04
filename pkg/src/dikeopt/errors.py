"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


class DataError(Exception):
    """Malformed or unusable input data (tide-gauge files, etc.)."""


class NumericalError(Exception):
    """A numerical procedure failed (fit divergence, singular matrix, ...)."""
