"""Exception taxonomy.

The CLI maps these onto distinct exit codes (config 2, data 3, numerical 4),
so new exceptions should subclass one of the three branches.
"""


class PlcdiagError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PlcdiagError):
    """Invalid configuration: unknown keys, bad values, inconsistent scenario."""


class DataError(PlcdiagError):
    """Problems with input data or stored artifacts."""


class InsufficientDataError(DataError):
    """Not enough samples to satisfy an operation's preconditions."""


class ModelIOError(DataError):
    """Model or stats file missing, corrupt, or of an unsupported version."""


class NumericalError(PlcdiagError):
    """Numerical failure during computation."""


class NotPositiveDefiniteError(NumericalError):
    """Matrix expected to be positive definite failed its Cholesky factorization."""


class FitDivergenceError(NumericalError):
    """Training loss became non-finite."""


class NotFittedError(PlcdiagError):
    """Predict was called on a model that has not been fitted."""
