"""Exception types shared across the package."""


class FairDiffusionError(Exception):
    """Base class for all package errors."""


class DimensionError(FairDiffusionError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ContractError(FairDiffusionError, ValueError):
    """An argument violates an operation's contract."""


class ConfigError(FairDiffusionError, ValueError):
    """A configuration value is out of its allowed range."""


class DataError(FairDiffusionError, ValueError):
    """A dataset cannot be constructed as requested."""


class IdxFormatError(DataError):
    """An IDX byte stream is malformed."""


class NumericError(FairDiffusionError, ArithmeticError):
    """A computation produced a non-finite value."""
