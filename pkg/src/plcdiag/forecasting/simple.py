"""The two trivial reference predictors: previous-value extrapolation and the
constant training mean."""

from __future__ import annotations

import numpy as np

from .base import Predictor, register_predictor


@register_predictor
class BaselinePredictor(Predictor):
    """Single-step extrapolation: the forecast is the previous value."""

    kind = "baseline"

    def _fit(self, series: np.ndarray) -> None:
        pass

    def _predict_one(self, window_values: np.ndarray) -> float:
        return float(window_values[-1])

    def _predict_series(self, series: np.ndarray, start: int) -> np.ndarray:
        return series[start - 1 : series.shape[0] - 1].copy()

    def state(self) -> dict:
        self._require_fitted()
        return {}

    def _restore(self, state: dict) -> None:
        pass


@register_predictor
class AvgPredictor(Predictor):
    """Constant forecast: the mean of the training series."""

    kind = "avg"

    def _fit(self, series: np.ndarray) -> None:
        self.mean_ = float(series.mean())

    def _predict_one(self, window_values: np.ndarray) -> float:
        return self.mean_

    def _predict_series(self, series: np.ndarray, start: int) -> np.ndarray:
        return np.full(series.shape[0] - start, self.mean_)

    def state(self) -> dict:
        self._require_fitted()
        return {"mean": self.mean_}

    def _restore(self, state: dict) -> None:
        self.mean_ = float(state["mean"])
