"""End-to-end detection pipeline over an SNR panel.

The pipeline batch-averages the panel, fits one predictor per stabilizer
batch on the training prefix, collects one-step prediction-error vectors
(predicted minus actual, one entry per batch), fits their Gaussian
statistics, and scores squared Mahalanobis distances for any span of the
same or another compatible panel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import ErrorStats, fit_error_stats, smd
from .errors import ConfigError, DataError, InsufficientDataError
from .forecasting import Predictor, make_predictor
from .timeseries import BatchSeries, SnrPanel, batch_average, train_split_index

DEFAULT_N_BATCHES = 9


def _batch_values(source, n_batches: int) -> np.ndarray:
    """Batch-mean series (n_batches, n_samples) from a panel or BatchSeries."""
    if isinstance(source, SnrPanel):
        return batch_average(source, n_batches).values
    if isinstance(source, BatchSeries):
        values = source.values
    else:
        values = np.asarray(source, dtype=np.float64)
    if values.ndim != 2:
        raise DataError(f"batch series must be 2-D, got shape {values.shape}")
    if values.shape[0] != n_batches:
        raise DataError(
            f"batch series has {values.shape[0]} rows, expected {n_batches}"
        )
    return values


def merge_window(hyperparams: dict | None, window: int | None) -> dict:
    """Fold an explicit window into a hyperparameter dict, rejecting conflicts."""
    hyper = dict(hyperparams or {})
    if window is not None:
        if "window" in hyper and int(hyper["window"]) != int(window):
            raise ConfigError(
                f"window argument ({window}) conflicts with hyperparams "
                f"window ({hyper['window']})"
            )
        hyper["window"] = int(window)
    return hyper


def fit_batch_predictors(
    values: np.ndarray, kind: str, n_tr: int, hyperparams: dict | None = None
) -> list[Predictor]:
    """One fitted predictor per batch row, trained on the first n_tr samples."""
    if not 0 < n_tr <= values.shape[1]:
        raise ConfigError(
            f"n_tr must lie in [1, {values.shape[1]}], got {n_tr}"
        )
    hyper = dict(hyperparams or {})
    return [
        make_predictor(kind, **hyper).fit(row[:n_tr]) for row in values
    ]


def prediction_errors(
    predictors: list[Predictor],
    values: np.ndarray,
    start: int,
    stop: int | None = None,
) -> np.ndarray:
    """Error matrix delta[j - start, i] = predicted - actual for batch i at
    sample j, over label indices [start, stop)."""
    stop = values.shape[1] if stop is None else int(stop)
    if not predictors:
        raise ConfigError("need at least one predictor")
    if len(predictors) != values.shape[0]:
        raise DataError(
            f"{len(predictors)} predictors for {values.shape[0]} batch rows"
        )
    if stop <= start:
        raise DataError(f"empty span: start={start}, stop={stop}")
    columns = [
        model.predict_series(row[:stop], start) - row[start:stop]
        for model, row in zip(predictors, values)
    ]
    return np.stack(columns, axis=1)


@dataclass(frozen=True)
class BatchPipeline:
    """Fitted per-batch predictors plus their training-error statistics."""

    predictors: list[Predictor]
    stats: ErrorStats
    train_smds: np.ndarray
    window: int
    n_tr: int

    @property
    def n_batches(self) -> int:
        return len(self.predictors)

    def smd_series(self, source, start: int, stop: int | None = None) -> np.ndarray:
        """SMD scores for label indices [start, stop) of a compatible panel
        or batch-series source."""
        values = _batch_values(source, self.n_batches)
        errors = prediction_errors(self.predictors, values, start, stop)
        return smd(self.stats, errors)

    def test_smds(self, source) -> np.ndarray:
        """SMD scores for the post-training span [n_tr, end)."""
        return self.smd_series(source, self.n_tr)


def build_pipeline(
    source,
    kind: str,
    hyperparams: dict | None = None,
    n_batches: int = DEFAULT_N_BATCHES,
    window: int | None = None,
    train_fraction: float = 0.8,
    ridge: float | None = None,
    n_tr: int | None = None,
) -> BatchPipeline:
    """Fit the full detection pipeline on the training prefix of ``source``.

    ``window`` overrides the predictor window; if ``hyperparams`` also names
    one they must agree. ``n_tr`` overrides the train_fraction split.
    """
    hyper = merge_window(hyperparams, window)
    values = _batch_values(source, n_batches)
    n_samples = values.shape[1]
    if n_tr is None:
        n_tr = train_split_index(n_samples, train_fraction)
    n_tr = int(n_tr)
    if not 0 < n_tr <= n_samples:
        raise ConfigError(f"n_tr must lie in [1, {n_samples}], got {n_tr}")
    predictors = fit_batch_predictors(values, kind, n_tr, hyper)
    window = predictors[0].window
    if n_tr <= window + n_batches:
        raise InsufficientDataError(
            f"training prefix of {n_tr} samples leaves fewer than "
            f"{n_batches + 1} error vectors at window {window}"
        )
    train_errors = prediction_errors(predictors, values, window, n_tr)
    stats = fit_error_stats(train_errors, ridge=ridge)
    train_smds = smd(stats, train_errors)
    return BatchPipeline(
        predictors=predictors,
        stats=stats,
        train_smds=train_smds,
        window=window,
        n_tr=n_tr,
    )


def batch_rmse_report(
    predictors: list[Predictor], values: np.ndarray, n_tr: int
) -> list[dict]:
    """Per-batch normalized RMSE on the held-out span [n_tr, end).

    Failures (for example a constant test segment) are recorded per batch
    rather than raised.
    """
    from .timeseries import normalized_rmse

    report = []
    for i, (model, row) in enumerate(zip(predictors, values)):
        entry = {"batch": i, "rmse": None, "error": None}
        try:
            preds = model.predict_series(row, n_tr)
            entry["rmse"] = float(normalized_rmse(row[n_tr:], preds))
        except DataError as exc:
            entry["error"] = str(exc)
        report.append(entry)
    return report
