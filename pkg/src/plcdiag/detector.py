"""Anomaly detection on batch prediction errors.

Prediction-error vectors (one entry per stabilizer batch) are modeled as a
stationary multivariate Gaussian. Each test vector is scored by its squared
Mahalanobis distance (SMD) under the fitted mean and regularized covariance
inverse; a verdict fires when the SMD exceeds a threshold chosen either
theoretically (chi-squared quantile with one degree of freedom per batch)
or empirically (order statistic of the training SMDs).

Note on the quadratic form: the distance is the standard Mahalanobis form
with the inverse covariance. Source material for this detector sometimes
prints the covariance itself inside the quadratic form; only the inverse
form makes the healthy scores chi-squared distributed, which both the
theoretical threshold and the calibration tests rely on.

The degrees of freedom equal the number of batches; no correction is made
for the estimated mean and covariance.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, InsufficientDataError
from .numerics import chi2_quantile, sym_inverse

DEFAULT_RIDGE_FRACTION = 1e-6
THRESHOLD_MODES = ("theoretical", "empirical")


@dataclass(frozen=True)
class ErrorStats:
    """Fitted Gaussian of training error vectors with a cached inverse."""

    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    ridge: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        prec = np.asarray(self.precision, dtype=np.float64)
        dim = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (dim, dim) or prec.shape != (dim, dim):
            raise ConfigError(
                f"inconsistent stats shapes: mean {mean.shape}, "
                f"covariance {cov.shape}, precision {prec.shape}"
            )
        if self.ridge < 0:
            raise ConfigError(f"ridge must be >= 0, got {self.ridge}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "precision", prec)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "precision": self.precision.tolist(),
            "ridge": self.ridge,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ErrorStats":
        try:
            return cls(
                mean=np.asarray(doc["mean"], dtype=np.float64),
                covariance=np.asarray(doc["covariance"], dtype=np.float64),
                precision=np.asarray(doc["precision"], dtype=np.float64),
                ridge=float(doc["ridge"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"corrupt error-stats payload: {exc}") from exc


def _as_error_matrix(errors, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(errors, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DataError(f"error vectors must form a 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("error vectors contain non-finite values")
    if dim is not None and arr.shape[1] != dim:
        raise DataError(
            f"error vectors have dimension {arr.shape[1]}, expected {dim}"
        )
    return arr


def fit_error_stats(train_errors, ridge: float | None = None) -> ErrorStats:
    """Sample mean, unbiased sample covariance, and regularized inverse.

    ``ridge`` defaults to 1e-6 * trace(covariance)/dim, which keeps the
    inverse well-behaved when training windows are short or batch errors
    are strongly correlated.
    """
    errors = _as_error_matrix(train_errors)
    n, dim = errors.shape
    if n < dim + 1:
        raise InsufficientDataError(
            f"need at least {dim + 1} error vectors to fit {dim}-dimensional "
            f"statistics, got {n}"
        )
    mean = errors.mean(axis=0)
    centered = errors - mean
    covariance = centered.T @ centered / (n - 1)
    if ridge is None:
        ridge = DEFAULT_RIDGE_FRACTION * float(np.trace(covariance)) / dim
    ridge = float(ridge)
    if ridge < 0:
        raise ConfigError(f"ridge must be >= 0, got {ridge}")
    precision = sym_inverse(covariance, ridge=ridge)
    return ErrorStats(
        mean=mean, covariance=covariance, precision=precision, ridge=ridge
    )


def smd(stats: ErrorStats, delta) -> float | np.ndarray:
    """Squared Mahalanobis distance under ``stats``.

    A single vector yields a float; a (n, dim) matrix yields an array of n
    scores. Tiny negative rounding residues are clipped to zero.
    """
    arr = np.asarray(delta, dtype=np.float64)
    single = arr.ndim == 1
    arr = _as_error_matrix(arr, dim=stats.dim)
    centered = arr - stats.mean
    values = np.einsum("ij,jk,ik->i", centered, stats.precision, centered)
    values = np.maximum(values, 0.0)
    return float(values[0]) if single else values


def threshold_theoretical(p_fa: float, kappa: int) -> float:
    """Chi-squared quantile threshold: exceeded with probability p_fa under
    the healthy distribution with ``kappa`` degrees of freedom."""
    p_fa = float(p_fa)
    if not 0.0 < p_fa < 1.0:
        raise ConfigError(f"p_fa must lie strictly inside (0, 1), got {p_fa}")
    return chi2_quantile(kappa, 1.0 - p_fa)


def threshold_empirical(train_smds, p_fa: float, n_tr: int, window: int) -> float:
    """The k-th largest training SMD with k = floor(p_fa * (n_tr - window)).

    k is 1-indexed in descending order, so k=1 selects the maximum.
    """
    p_fa = float(p_fa)
    if not 0.0 < p_fa < 1.0:
        raise ConfigError(f"p_fa must lie strictly inside (0, 1), got {p_fa}")
    scores = np.asarray(train_smds, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise DataError("train_smds must be a non-empty 1-D sequence")
    k = int(np.floor(p_fa * (n_tr - window)))
    if k < 1 or k > scores.size:
        raise InsufficientDataError(
            f"empirical threshold rank {k} outside [1, {scores.size}]: "
            f"training set too small for p_fa={p_fa}"
        )
    return float(np.sort(scores)[::-1][k - 1])


@dataclass(frozen=True)
class DetectionReport:
    """Per-sample SMD scores and alarm verdicts for one detection run."""

    smd: np.ndarray
    threshold: float
    alarms: np.ndarray
    p_fa_target: float
    threshold_mode: str

    def __post_init__(self):
        scores = np.asarray(self.smd, dtype=np.float64)
        alarms = np.asarray(self.alarms, dtype=bool)
        if scores.shape != alarms.shape or scores.ndim != 1:
            raise ConfigError(
                f"smd and alarms must be equal-length 1-D arrays, got "
                f"{scores.shape} and {alarms.shape}"
            )
        if not 0.0 < self.p_fa_target < 1.0:
            raise ConfigError(
                f"p_fa_target must lie strictly inside (0, 1), got {self.p_fa_target}"
            )
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigError(
                f"threshold_mode must be one of {THRESHOLD_MODES}, "
                f"got {self.threshold_mode!r}"
            )
        object.__setattr__(self, "smd", scores)
        object.__setattr__(self, "alarms", alarms)

    @property
    def n_samples(self) -> int:
        return self.smd.shape[0]

    @property
    def alarm_count(self) -> int:
        return int(self.alarms.sum())

    @property
    def first_alarm_index(self) -> int | None:
        hits = np.flatnonzero(self.alarms)
        return int(hits[0]) if hits.size else None

    def summary(self) -> dict:
        return {
            "threshold": self.threshold,
            "threshold_mode": self.threshold_mode,
            "p_fa_target": self.p_fa_target,
            "n_samples": self.n_samples,
            "alarm_count": self.alarm_count,
            "alarm_fraction": (
                self.alarm_count / self.n_samples if self.n_samples else 0.0
            ),
            "first_alarm_index": self.first_alarm_index,
        }

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "smd", "alarm"])
            for i, (score, alarm) in enumerate(zip(self.smd, self.alarms)):
                writer.writerow([i, repr(float(score)), int(alarm)])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return path


def detect(
    stats: ErrorStats,
    test_errors,
    threshold: float,
    p_fa: float,
    mode: str = "theoretical",
) -> DetectionReport:
    """Score every test error vector and flag those whose SMD exceeds the
    threshold."""
    threshold = float(threshold)
    if threshold < 0:
        raise ConfigError(f"threshold must be >= 0, got {threshold}")
    scores = smd(stats, _as_error_matrix(test_errors, dim=stats.dim))
    return DetectionReport(
        smd=scores,
        threshold=threshold,
        alarms=scores > threshold,
        p_fa_target=p_fa,
        threshold_mode=mode,
    )
