"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class HiercastError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(HiercastError):
    """Invalid configuration, missing files, bad CLI arguments."""


class DataError(HiercastError):
    """Malformed input data: broken hierarchy, incoherent observations,
    missing exogenous values, degenerate series."""


class NumericError(HiercastError):
    """Numeric failure: diverging training, singular systems, undefined
    metrics."""
