"""Exception hierarchy shared across the package.

The CLI maps these onto its exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class PrognoscopeError(Exception):
    """Base class for all package errors."""


class ConfigError(PrognoscopeError):
    """Inconsistent or invalid configuration / arguments."""


class DataError(PrognoscopeError):
    """Malformed, missing, or contract-violating input data."""


class NumericError(PrognoscopeError):
    """NaN/Inf contamination or an undefined statistic."""


class ShapeError(ConfigError):
    """Tensor or layer dimension mismatch."""
