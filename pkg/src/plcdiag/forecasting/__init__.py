"""One-step-ahead forecasters over fixed-length windows.

Importing this package registers every built-in predictor kind, so
``make_predictor(kind, ...)`` and model loading work without importing the
concrete modules individually.
"""

from .arima import ArimaParams, ArimaPredictor, arima_grid_search
from .base import (
    DEFAULT_WINDOW,
    PREDICTOR_REGISTRY,
    Predictor,
    make_predictor,
    register_predictor,
    sliding_windows,
)
from .boosting import L2BoostPredictor
from .model_io import load_model, save_model
from .neural import FfnnPredictor, GradientTrainedPredictor, LstmPredictor
from .simple import AvgPredictor, BaselinePredictor

__all__ = [
    "ArimaParams",
    "ArimaPredictor",
    "AvgPredictor",
    "BaselinePredictor",
    "DEFAULT_WINDOW",
    "FfnnPredictor",
    "GradientTrainedPredictor",
    "L2BoostPredictor",
    "LstmPredictor",
    "PREDICTOR_REGISTRY",
    "Predictor",
    "arima_grid_search",
    "load_model",
    "make_predictor",
    "register_predictor",
    "save_model",
    "sliding_windows",
]
