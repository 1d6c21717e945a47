"""SNR panel container, stabilizer-batch averaging, windowing, and the
normalized RMSE metric, plus CSV ingestion for panels.

A panel holds one SNR row per 15-minute sample; stabilizer batches average
contiguous subcarrier groups into a small number of stable series that the
predictors and the detector consume.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError

DEFAULT_PERIOD_S = 900.0
SAMPLES_PER_DAY = 96


@dataclass
class SnrPanel:
    """Time-indexed matrix of per-subcarrier SNR in dB, shape (n_samples, n_subcarriers)."""

    values: np.ndarray
    period_s: float = DEFAULT_PERIOD_S

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise DataError(f"panel must be a non-empty 2-D array, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise DataError("panel contains non-finite values")
        if self.period_s <= 0:
            raise DataError("period_s must be positive")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.values.shape[1]


def batch_bounds(n_subcarriers: int, n_batches: int) -> tuple[tuple[int, int], ...]:
    """Half-open contiguous index ranges: base size floor(n_sc/n_batches),
    remainder going one-each to the leading batches."""
    if n_batches < 1:
        raise ValueError(f"n_batches must be >= 1, got {n_batches}")
    if n_batches > n_subcarriers:
        raise DataError(
            f"n_batches ({n_batches}) exceeds subcarrier count ({n_subcarriers})"
        )
    base, rem = divmod(n_subcarriers, n_batches)
    sizes = [base + 1] * rem + [base] * (n_batches - rem)
    bounds = []
    lo = 0
    for size in sizes:
        bounds.append((lo, lo + size))
        lo += size
    return tuple(bounds)


@dataclass
class BatchSeries:
    """Batch-mean SNR series, shape (n_batches, n_samples), with the
    subcarrier ranges each batch averages."""

    values: np.ndarray
    bounds: tuple[tuple[int, int], ...]
    period_s: float = DEFAULT_PERIOD_S

    @property
    def n_batches(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


def batch_average(panel: SnrPanel, n_batches: int) -> BatchSeries:
    bounds = batch_bounds(panel.n_subcarriers, n_batches)
    values = np.stack([panel.values[:, lo:hi].mean(axis=1) for lo, hi in bounds])
    return BatchSeries(values=values, bounds=bounds, period_s=panel.period_s)


@dataclass
class WindowedSet:
    """Supervised windows over one series: inputs[k] is series[j:j+w],
    labels[k] = series[j+w]. Items whose 0-based label index is < split_index
    belong to the training split."""

    inputs: np.ndarray
    labels: np.ndarray
    label_indices: np.ndarray
    window: int
    split_index: int

    @property
    def train_mask(self) -> np.ndarray:
        return self.label_indices < self.split_index

    @property
    def train_inputs(self) -> np.ndarray:
        return self.inputs[self.train_mask]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_mask]

    @property
    def test_inputs(self) -> np.ndarray:
        return self.inputs[~self.train_mask]

    @property
    def test_labels(self) -> np.ndarray:
        return self.labels[~self.train_mask]


def make_windows(series: np.ndarray, window: int, split_index: int) -> WindowedSet:
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError(f"series must be 1-D, got shape {series.shape}")
    n = series.shape[0]
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if window >= n:
        raise DataError(f"window ({window}) must be smaller than series length ({n})")
    if not 0 <= split_index <= n:
        raise ValueError(f"split_index {split_index} outside [0, {n}]")
    inputs = np.lib.stride_tricks.sliding_window_view(series, window)[: n - window]
    labels = series[window:]
    label_indices = np.arange(window, n)
    return WindowedSet(
        inputs=inputs,
        labels=labels,
        label_indices=label_indices,
        window=window,
        split_index=split_index,
    )


def train_split_index(n_samples: int, train_fraction: float = 0.8) -> int:
    """Number of leading samples reserved for training."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    return int(np.floor(train_fraction * n_samples))


def normalized_rmse(actual: np.ndarray, predicted: np.ndarray) -> float:
    """Root-mean-square error scaled by the RMS deviation of the actual
    series from its own mean over the evaluated segment."""
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape or actual.ndim != 1 or actual.size == 0:
        raise ValueError(
            f"actual and predicted must be equal-length non-empty 1-D arrays, "
            f"got {actual.shape} and {predicted.shape}"
        )
    mu = actual.mean()
    denom = float(np.sqrt(np.sum((actual - mu) ** 2)))
    if denom == 0.0:
        raise DataError("normalized RMSE undefined: actual segment is constant")
    num = float(np.sqrt(np.sum((actual - predicted) ** 2)))
    return num / denom


# ---------------------------------------------------------------------------
# CSV ingestion / export


def panel_header(n_subcarriers: int) -> list[str]:
    return ["t_index"] + [f"snr_db_{i}" for i in range(n_subcarriers)]


def write_panel_csv(path, panel: SnrPanel) -> None:
    frame = pd.DataFrame(panel.values, columns=panel_header(panel.n_subcarriers)[1:])
    frame.insert(0, "t_index", np.arange(panel.n_samples))
    frame.to_csv(path, index=False, lineterminator="\n")


def read_panel_csv(path, period_s: float = DEFAULT_PERIOD_S) -> SnrPanel:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read panel CSV {path}: {exc}") from exc
    expected = panel_header(frame.shape[1] - 1)
    if list(frame.columns) != expected:
        raise DataError(
            f"unexpected panel CSV header in {path}: {list(frame.columns)[:4]}..."
        )
    values = frame.iloc[:, 1:].to_numpy(dtype=np.float64)
    if frame.shape[0] == 0:
        raise DataError(f"panel CSV {path} contains no rows")
    if not np.array_equal(frame["t_index"].to_numpy(), np.arange(frame.shape[0])):
        raise DataError(f"t_index column in {path} is not a contiguous 0-based range")
    return SnrPanel(values=values, period_s=period_s)


def read_long_csv(
    path,
    period_s: float = DEFAULT_PERIOD_S,
    max_gap: int = 4,
) -> list[SnrPanel]:
    """Ingest (timestamp, subcarrier, snr_db) rows from field recordings.

    Timestamps are seconds and must align to the sampling grid. Grid rows
    with all subcarriers present are complete; runs of up to max_gap
    incomplete rows are forward-filled from the last complete row, longer
    runs split the recording into separate panels.
    """
    cells: dict[float, dict[int, float]] = {}
    subcarriers: set[int] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", "subcarrier", "snr_db"]:
            raise DataError(f"unexpected long CSV header in {path}: {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts, sc, snr = float(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row {row}") from exc
            cells.setdefault(ts, {})[sc] = snr
            subcarriers.add(sc)
    if not cells:
        raise DataError(f"long CSV {path} contains no data rows")
    sc_ids = sorted(subcarriers)
    if sc_ids != list(range(len(sc_ids))):
        raise DataError(f"subcarrier ids in {path} are not contiguous from 0")
    times = sorted(cells)
    t0 = times[0]
    for ts in times:
        if abs((ts - t0) % period_s) > 1e-6 and abs((ts - t0) % period_s - period_s) > 1e-6:
            raise DataError(f"timestamp {ts} does not align to the {period_s}s grid")
    n_grid = int(round((times[-1] - t0) / period_s)) + 1
    panels: list[SnrPanel] = []
    rows: list[np.ndarray] = []
    gap_run = 0
    for k in range(n_grid):
        ts = t0 + k * period_s
        row = cells.get(ts)
        complete = row is not None and len(row) == len(sc_ids)
        if complete:
            rows.append(np.array([row[i] for i in range(len(sc_ids))]))
            gap_run = 0
        else:
            gap_run += 1
            if rows and gap_run <= max_gap:
                rows.append(rows[-1].copy())
            elif rows:
                # Gap too long: drop the filled rows of this run and split.
                del rows[len(rows) - (gap_run - 1):]
                if rows:
                    panels.append(SnrPanel(np.stack(rows), period_s=period_s))
                rows = []
    if rows:
        panels.append(SnrPanel(np.stack(rows), period_s=period_s))
    if not panels:
        raise DataError(f"long CSV {path} yields no usable segments")
    return panels
