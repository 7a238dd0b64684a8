from __future__ import annotations


class BlockmixError(Exception):
    """Base class for every error raised by blockmix."""


class DataError(BlockmixError, ValueError):
    """Input data cannot be used (missing values, constant column, shape mismatch...)."""


class ArtifactError(DataError):
    """A result/truth/config file is unreadable or does not match the data."""


class ConfigError(BlockmixError, ValueError):
    """Invalid parameters or flag combinations."""


class NumericError(BlockmixError, ArithmeticError):
    """Internal numeric failure (non-finite objective, empty simplex...)."""
