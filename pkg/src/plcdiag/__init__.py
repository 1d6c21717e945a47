"""Power-line-channel SNR synthesis, forecasting, and cable anomaly detection.

The package covers the whole monitoring pipeline: bottom-up emulation of
per-subcarrier SNR panels for a T-topology power line network (with
configurable loads, cable constants, and injected faults), stabilizer-batch
averaging, a family of one-step-ahead forecasters, and a chi-squared test on
the squared Mahalanobis distance of the prediction-error vector.

Heavy kernels are compiled with numba when available; set
``PLCDIAG_DISABLE_NUMBA=1`` to force the pure-numpy fallback.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    FitDivergenceError,
    InsufficientDataError,
    ModelIOError,
    NotFittedError,
    NotPositiveDefiniteError,
    NumericalError,
    PlcdiagError,
)

__all__ = [
    "ConfigError",
    "DataError",
    "FitDivergenceError",
    "InsufficientDataError",
    "ModelIOError",
    "NotFittedError",
    "NotPositiveDefiniteError",
    "NumericalError",
    "PlcdiagError",
    "__version__",
]
