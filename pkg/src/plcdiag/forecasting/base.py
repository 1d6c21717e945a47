"""Uniform predictor contract: fit on one training series, forecast one step
from a window of recent values.

Every predictor is deterministic after fit (stochastic trainers take an
explicit seed), and its fitted state round-trips through JSON-safe
dictionaries for model files.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from ..errors import ConfigError, DataError, InsufficientDataError, NotFittedError
from ..timeseries import SAMPLES_PER_DAY

DEFAULT_WINDOW = SAMPLES_PER_DAY

PREDICTOR_REGISTRY: dict[str, type["Predictor"]] = {}


def register_predictor(cls: type["Predictor"]) -> type["Predictor"]:
    PREDICTOR_REGISTRY[cls.kind] = cls
    return cls


def make_predictor(kind: str, **hyperparams) -> "Predictor":
    try:
        cls = PREDICTOR_REGISTRY[kind]
    except KeyError:
        known = ", ".join(sorted(PREDICTOR_REGISTRY))
        raise ConfigError(f"unknown predictor kind {kind!r}; known kinds: {known}") from None
    try:
        return cls(**hyperparams)
    except TypeError as exc:
        raise ConfigError(f"invalid hyperparameters for {kind!r}: {exc}") from exc


class Predictor(ABC):
    """One-step-ahead forecaster over a single series.

    Subclasses implement ``_fit`` (consume the raw training series) and
    ``_predict_one`` (forecast from exactly ``window`` recent values), and may
    override ``predict_series`` with a vectorized rolling forecast. Rolling
    forecasts always condition on true past values, never on their own output.
    """

    kind: str = ""

    def __init__(self, window: int = DEFAULT_WINDOW):
        window = int(window)
        if window < 1:
            raise ConfigError(f"window must be >= 1, got {window}")
        self.window = window
        self._fitted = False

    # -- fitting ------------------------------------------------------------

    @property
    def fitted(self) -> bool:
        return self._fitted

    def min_train_length(self) -> int:
        """Smallest training-series length accepted by fit (must exceed w)."""
        return self.window + 1

    def fit(self, series) -> "Predictor":
        series = _as_series(series)
        need = self.min_train_length()
        if series.shape[0] < need:
            raise InsufficientDataError(
                f"{self.kind} with window {self.window} needs at least {need} "
                f"training samples, got {series.shape[0]}"
            )
        self._fit(series)
        self._fitted = True
        return self

    @abstractmethod
    def _fit(self, series: np.ndarray) -> None: ...

    def _require_fitted(self) -> None:
        if not self._fitted:
            raise NotFittedError(f"{self.kind} predictor used before fit")

    # -- prediction ---------------------------------------------------------

    def predict_one(self, window_values) -> float:
        self._require_fitted()
        win = _as_series(window_values)
        if win.shape[0] != self.window:
            raise DataError(
                f"expected a window of {self.window} values, got {win.shape[0]}"
            )
        return float(self._predict_one(win))

    @abstractmethod
    def _predict_one(self, window_values: np.ndarray) -> float: ...

    def predict_series(self, series, start: int) -> np.ndarray:
        """One-step rolling forecasts for indices start..len(series)-1, each
        conditioned on the true values preceding it."""
        self._require_fitted()
        series = _as_series(series)
        start = int(start)
        if start < self.window:
            raise DataError(
                f"start index {start} precedes the first full window ({self.window})"
            )
        if start > series.shape[0]:
            raise DataError(
                f"start index {start} beyond series length {series.shape[0]}"
            )
        return self._predict_series(series, start)

    def _predict_series(self, series: np.ndarray, start: int) -> np.ndarray:
        out = np.empty(series.shape[0] - start)
        for k, j in enumerate(range(start, series.shape[0])):
            out[k] = self._predict_one(series[j - self.window : j])
        return out

    # -- serialization ------------------------------------------------------

    def hyperparams(self) -> dict:
        """Constructor arguments (window included), JSON-safe."""
        return {"window": self.window}

    @abstractmethod
    def state(self) -> dict:
        """Fitted state, JSON-safe; raises NotFittedError if unfitted."""

    @abstractmethod
    def _restore(self, state: dict) -> None:
        """Install fitted state produced by state()."""


def _as_series(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"expected a 1-D series, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("series contains non-finite values")
    return arr


def sliding_windows(series: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """All (input window, next value) pairs of a series, time-ordered."""
    inputs = np.lib.stride_tricks.sliding_window_view(series, window)[:-1]
    return inputs, series[window:]
