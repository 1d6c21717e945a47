"""Experiment harness: forecasting benchmarks, ROC studies over repeated
fault trials, cross-network threshold transfer, and incipient-fault tracking.

Every experiment is described by an :class:`ExperimentSpec`: a scenario
template plus the predictors to compare.  Trials re-run the same scenario
with consecutive seeds (``seed_base + trial``), so results are reproducible
bit for bit and each predictor sees identical data within a trial.

Scoring modes for ROC studies (``SCORING_MODES``):

* ``"trial"`` (default) — one score per trial and class: the maximum
  detector score over the faulty span versus the maximum over the healthy
  test span.  Both classes get the same max-statistic, so a run with no
  fault stays at chance level (AUC ~ 0.5).
* ``"per_sample"`` — every test sample contributes a score, labelled by the
  ground-truth anomaly mask.  Highest resolution, but mixes within-trial
  and between-trial variation.
* ``"hybrid"`` — max-score per trial on the faulty side, pooled per-sample
  scores on the healthy side.  Detection is judged per trial while false
  alarms are judged per sample; the asymmetric statistics make this mode
  optimistic (healthy-vs-healthy AUC above 0.5), so it is not the default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import theilslopes

from .detector import (
    DetectionReport,
    THRESHOLD_MODES,
    threshold_empirical,
    threshold_theoretical,
)
from .emulator import Dataset, FaultSpec, Scenario, TopologySpec, days_to_samples
from .emulator import generate_dataset
from .errors import ConfigError, DataError, NumericalError
from .pipeline import (
    DEFAULT_N_BATCHES,
    build_pipeline,
    fit_batch_predictors,
    merge_window,
)
from .timeseries import (
    SAMPLES_PER_DAY,
    SnrPanel,
    batch_average,
    normalized_rmse,
    train_split_index,
)

SCORING_MODES = ("trial", "per_sample", "hybrid")

#: Branch length (metres) used by the bundled experiment scenarios.
EXPERIMENT_BRANCH_M = 10.0

#: Cap on the number of points handed to the rank-based trend statistic;
#: longer score series are reduced to this many block means first (the
#: statistic is O(n^2) in the number of points, and block averaging keeps
#: the trend power that plain decimation would throw away).
MAX_TREND_POINTS = 400


def experiment_topology(branch_m: float = EXPERIMENT_BRANCH_M) -> TopologySpec:
    """Network layout used by the bundled experiments.

    The stock topology hangs a 200 m branch off the trunk.  Its reflection
    comb is much finer than one stabilizer batch, so averaging a batch's
    subcarriers cancels the daily load signature almost exactly and every
    forecaster collapses onto the mean.  A 10 m branch stretches the comb
    period well past the batch width, so load swings survive batch
    averaging and the forecasting comparison actually exercises the
    predictors.  Pass ``branch_m`` explicitly to study other layouts.
    """
    return TopologySpec(branch_m=float(branch_m))


def experiment_scenario(
    days: float = 24.0,
    seed: int = 0,
    fault: FaultSpec | None = None,
    branch_m: float = EXPERIMENT_BRANCH_M,
) -> Scenario:
    """Scenario template shared by the bundled experiments."""
    return Scenario(
        topology=experiment_topology(branch_m),
        fault=FaultSpec() if fault is None else fault,
        n_samples=days_to_samples(days),
        seed=int(seed),
    )


@dataclass(frozen=True)
class ExperimentSpec:
    """A scenario template plus the predictors to compare on it.

    ``predictors`` maps predictor kind to extra hyperparameters (the shared
    ``window`` is folded in automatically and must not conflict).  Trial
    ``k`` re-runs ``scenario`` with seed ``seed_base + k``.
    """

    scenario: Scenario
    predictors: dict = field(default_factory=lambda: {"arima": {}})
    window: int = SAMPLES_PER_DAY
    n_batches: int = DEFAULT_N_BATCHES
    train_fraction: float = 0.8
    p_fa_grid: tuple = (0.01,)
    n_trials: int = 20
    seed_base: int = 0

    def __post_init__(self):
        if not isinstance(self.predictors, dict) or not self.predictors:
            raise ConfigError("predictors must be a non-empty mapping of kind -> hyperparams")
        for kind, hyper in self.predictors.items():
            if not isinstance(hyper, dict):
                raise ConfigError(f"hyperparams for {kind!r} must be a dict")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.n_batches < 1:
            raise ConfigError(f"n_batches must be >= 1, got {self.n_batches}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")
        grid = tuple(float(p) for p in self.p_fa_grid)
        if not grid:
            raise ConfigError("p_fa_grid must not be empty")
        for p in grid:
            if not 0.0 < p < 1.0:
                raise ConfigError(f"p_fa values must lie in (0, 1), got {p}")
        object.__setattr__(self, "p_fa_grid", grid)

    def trial_scenario(self, trial: int) -> Scenario:
        return replace(self.scenario, seed=self.seed_base + int(trial))

    def trial_seed(self, trial: int) -> int:
        return self.seed_base + int(trial)


def result_path(out_dir, experiment: str, predictor: str, seed: int, ext: str) -> Path:
    """``<out_dir>/<experiment>_<predictor>_<seed>.<ext>`` (creates out_dir)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{experiment}_{predictor}_{seed}.{ext}"


# ---------------------------------------------------------------------------
# ROC curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RocCurve:
    """Detection-vs-false-alarm curve from a descending threshold sweep.

    ``points`` are (p_fa, p_dt) pairs starting at (0, 0) (threshold above
    every score) and ending at (1, 1) (threshold below every score), both
    coordinates non-decreasing.  ``auc`` is the trapezoidal area.
    """

    points: tuple
    auc: float
    trial_count: int

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2 or pts[0] != (0.0, 0.0) or pts[-1] != (1.0, 1.0):
            raise DataError("ROC points must run from (0, 0) to (1, 1)")
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        if np.any(np.diff(xs) < 0) or np.any(np.diff(ys) < 0):
            raise DataError("ROC points must be non-decreasing in both coordinates")
        if not 0.0 <= self.auc <= 1.0 + 1e-12:
            raise DataError(f"AUC must lie in [0, 1], got {self.auc}")

    @classmethod
    def from_scores(cls, fault_scores, healthy_scores, trial_count: int) -> "RocCurve":
        """Sweep a shared threshold from above all scores down to below all."""
        fault = np.asarray(fault_scores, dtype=np.float64).ravel()
        healthy = np.asarray(healthy_scores, dtype=np.float64).ravel()
        if fault.size == 0 or healthy.size == 0:
            raise DataError("both score populations must be non-empty")
        if not (np.all(np.isfinite(fault)) and np.all(np.isfinite(healthy))):
            raise DataError("scores must be finite")
        thresholds = np.unique(np.concatenate([fault, healthy]))[::-1]
        pts = [(0.0, 0.0)]
        for t in thresholds:
            pts.append((float(np.mean(healthy > t)), float(np.mean(fault > t))))
        pts.append((1.0, 1.0))
        deduped = [pts[0]]
        for p in pts[1:]:
            if p != deduped[-1]:
                deduped.append(p)
        xs = np.array([p[0] for p in deduped])
        ys = np.array([p[1] for p in deduped])
        auc = float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))
        return cls(points=tuple(deduped), auc=auc, trial_count=int(trial_count))

    def detection_at(self, p_fa: float) -> float:
        """Largest p_dt achievable at false-alarm rate <= p_fa."""
        best = 0.0
        for x, y in self.points:
            if x <= p_fa + 1e-12:
                best = max(best, y)
        return best

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["p_fa,p_dt"]
        lines += [f"{repr(x)},{repr(y)}" for x, y in self.points]
        path.write_text("\n".join(lines) + "\n")
        return path

    def summary(self) -> dict:
        return {
            "auc": self.auc,
            "n_points": len(self.points),
            "trial_count": self.trial_count,
        }


def _split_scores(scores: np.ndarray, fault_mask: np.ndarray):
    scores = np.asarray(scores, dtype=np.float64)
    fault_mask = np.asarray(fault_mask, dtype=bool)
    if scores.shape != fault_mask.shape:
        raise DataError(
            f"scores and mask lengths differ: {scores.shape} vs {fault_mask.shape}"
        )
    fault_span = scores[fault_mask]
    healthy_span = scores[~fault_mask]
    if fault_span.size == 0 or healthy_span.size == 0:
        raise DataError("test span must contain both faulty and healthy samples")
    return fault_span, healthy_span


def _collect_roc_scores(scores, fault_mask, scoring, fault_out, healthy_out):
    fault_span, healthy_span = _split_scores(scores, fault_mask)
    if scoring == "trial":
        fault_out.append(float(fault_span.max()))
        healthy_out.append(float(healthy_span.max()))
    elif scoring == "per_sample":
        fault_out.extend(float(s) for s in fault_span)
        healthy_out.extend(float(s) for s in healthy_span)
    else:  # hybrid
        fault_out.append(float(fault_span.max()))
        healthy_out.extend(float(s) for s in healthy_span)


def run_roc(spec: ExperimentSpec, scoring: str = "trial", out_dir=None) -> dict:
    """ROC curve per predictor over ``spec.n_trials`` seeded fault trials.

    Each trial generates one dataset (training prefix must be healthy), fits
    every predictor's pipeline on the same training prefix, and scores the
    test span.  Scores are reduced per ``scoring`` (see module docstring)
    and pooled across trials into one curve per predictor kind.
    """
    if scoring not in SCORING_MODES:
        raise ConfigError(f"scoring must be one of {SCORING_MODES}, got {scoring!r}")
    if spec.scenario.fault.kind == "none":
        raise ConfigError("ROC experiments need a fault scenario; got kind 'none'")
    collected = {kind: ([], []) for kind in spec.predictors}
    for trial in range(spec.n_trials):
        dataset = generate_dataset(spec.trial_scenario(trial))
        n_samples = dataset.panel.n_samples
        n_tr = train_split_index(n_samples, spec.train_fraction)
        if dataset.mask[:n_tr].any():
            raise ConfigError(
                "fault onset falls inside the training prefix; move the onset "
                f"past sample {n_tr} or lower train_fraction"
            )
        batches = batch_average(dataset.panel, spec.n_batches)
        for kind, hyper in spec.predictors.items():
            pipe = build_pipeline(
                batches,
                kind,
                hyperparams=hyper,
                n_batches=spec.n_batches,
                window=spec.window,
                n_tr=n_tr,
            )
            scores = pipe.smd_series(batches, n_tr)
            fault_out, healthy_out = collected[kind]
            _collect_roc_scores(
                scores, dataset.mask[n_tr:], scoring, fault_out, healthy_out
            )
    curves = {
        kind: RocCurve.from_scores(fault_out, healthy_out, spec.n_trials)
        for kind, (fault_out, healthy_out) in collected.items()
    }
    if out_dir is not None:
        for kind, curve in curves.items():
            curve.write_csv(result_path(out_dir, "roc", kind, spec.seed_base, "csv"))
            path = result_path(out_dir, "roc", kind, spec.seed_base, "json")
            path.write_text(json.dumps(curve.summary(), indent=2, sort_keys=True) + "\n")
    return curves


# ---------------------------------------------------------------------------
# Forecasting benchmark
# ---------------------------------------------------------------------------


def run_predictor_benchmark(spec: ExperimentSpec, out_dir=None) -> list:
    """Per-trial forecasting quality of every predictor on healthy data.

    Returns one record per (trial, predictor): the mean normalized RMSE over
    the batch series' test spans, the per-batch values, and the error message
    if fitting failed (failures are recorded, not raised).
    """
    if spec.scenario.fault.kind != "none":
        raise ConfigError(
            "the forecasting benchmark expects healthy scenarios; got fault "
            f"kind {spec.scenario.fault.kind!r}"
        )
    records = []
    for trial in range(spec.n_trials):
        dataset = generate_dataset(spec.trial_scenario(trial))
        batches = batch_average(dataset.panel, spec.n_batches)
        n_tr = train_split_index(dataset.panel.n_samples, spec.train_fraction)
        for kind, hyper in spec.predictors.items():
            record = {
                "predictor": kind,
                "trial": trial,
                "seed": spec.trial_seed(trial),
                "rmse": None,
                "per_batch": None,
                "error": None,
            }
            try:
                models = fit_batch_predictors(
                    batches.values, kind, n_tr, merge_window(hyper, spec.window)
                )
                per_batch = []
                for model, row in zip(models, batches.values):
                    predicted = model.predict_series(row, n_tr)
                    per_batch.append(float(normalized_rmse(row[n_tr:], predicted)))
                record["per_batch"] = per_batch
                record["rmse"] = float(np.mean(per_batch))
            except (DataError, NumericalError) as exc:
                record["error"] = f"{type(exc).__name__}: {exc}"
            records.append(record)
    if out_dir is not None:
        for kind in spec.predictors:
            path = result_path(out_dir, "benchmark", kind, spec.seed_base, "csv")
            lines = ["trial,seed,rmse,error"]
            for record in records:
                if record["predictor"] != kind:
                    continue
                rmse = "" if record["rmse"] is None else repr(record["rmse"])
                err = record["error"] or ""
                lines.append(f"{record['trial']},{record['seed']},{rmse},{err}")
            path.write_text("\n".join(lines) + "\n")
    return records


def benchmark_summary(records: list) -> dict:
    """Mean normalized RMSE per predictor over successful trials."""
    summary = {}
    for record in records:
        summary.setdefault(record["predictor"], []).append(record)
    out = {}
    for kind, recs in summary.items():
        scores = [r["rmse"] for r in recs if r["rmse"] is not None]
        out[kind] = {
            "mean_rmse": float(np.mean(scores)) if scores else None,
            "n_trials": len(recs),
            "n_failed": sum(1 for r in recs if r["error"] is not None),
        }
    return out


# ---------------------------------------------------------------------------
# Threshold transfer between networks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransferResult:
    """Detector trained on one network, applied to another.

    ``report`` covers target samples ``start_index .. start_index + n - 1``;
    sample ``start_index + report.first_alarm_index`` is the first alarm in
    the target panel's own indexing.
    """

    report: DetectionReport
    start_index: int
    threshold: float
    threshold_mode: str

    @property
    def first_alarm_absolute(self):
        first = self.report.first_alarm_index
        return None if first is None else self.start_index + first


def _as_panel(source) -> SnrPanel:
    if isinstance(source, Dataset):
        return source.panel
    if isinstance(source, SnrPanel):
        return source
    raise ConfigError(
        f"expected a Dataset or SnrPanel, got {type(source).__name__}"
    )


def run_transfer(
    train_source,
    test_target,
    kind: str,
    hyperparams: dict | None = None,
    *,
    window: int = SAMPLES_PER_DAY,
    n_batches: int = DEFAULT_N_BATCHES,
    train_fraction: float = 0.8,
    p_fa: float = 0.01,
    threshold_mode: str = "theoretical",
    ridge: float | None = None,
    start: int | None = None,
) -> TransferResult:
    """Fit the pipeline on ``train_source`` and score ``test_target``.

    The error statistics, threshold, and per-batch predictors all come from
    the source network; the target contributes only test scores, starting at
    ``start`` (default: the first sample with a full window behind it).
    Panels must share the subcarrier count so batches line up.
    """
    source_panel = _as_panel(train_source)
    target_panel = _as_panel(test_target)
    if source_panel.n_subcarriers != target_panel.n_subcarriers:
        raise DataError(
            "batch configuration mismatch: source panel has "
            f"{source_panel.n_subcarriers} subcarriers, target has "
            f"{target_panel.n_subcarriers}"
        )
    if threshold_mode not in THRESHOLD_MODES:
        raise ConfigError(
            f"threshold_mode must be one of {THRESHOLD_MODES}, got {threshold_mode!r}"
        )
    pipe = build_pipeline(
        source_panel,
        kind,
        hyperparams=hyperparams,
        n_batches=n_batches,
        window=window,
        train_fraction=train_fraction,
        ridge=ridge,
    )
    if threshold_mode == "theoretical":
        threshold = threshold_theoretical(p_fa, pipe.n_batches)
    else:
        threshold = threshold_empirical(pipe.train_smds, p_fa, pipe.n_tr, pipe.window)
    if start is None:
        start = pipe.window
    start = int(start)
    if not pipe.window <= start < target_panel.n_samples:
        raise ConfigError(
            f"start must lie in [{pipe.window}, {target_panel.n_samples}), got {start}"
        )
    scores = pipe.smd_series(target_panel, start)
    report = DetectionReport(
        smd=scores,
        threshold=float(threshold),
        alarms=scores > threshold,
        p_fa_target=float(p_fa),
        threshold_mode=threshold_mode,
    )
    return TransferResult(
        report=report,
        start_index=start,
        threshold=float(threshold),
        threshold_mode=threshold_mode,
    )


# ---------------------------------------------------------------------------
# Incipient-fault tracking
# ---------------------------------------------------------------------------


def trend_statistic(
    scores, n_permutations: int = 199, seed: int = 0, max_points: int = MAX_TREND_POINTS
):
    """Rank-based (median-of-pairwise-slopes) trend with a permutation p-value.

    Returns ``(slope, p_value)``: the slope is per original sample, and the
    one-sided p-value is the fraction of ``n_permutations`` random shuffles
    (plus the observation itself) whose slope reaches the observed one.
    Series longer than ``max_points`` are reduced to that many contiguous
    block means first — the statistic costs O(n^2) pairs per evaluation, and
    block averaging preserves trend power while bounding the cost.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size < 3:
        raise DataError(f"trend statistic needs at least 3 points, got {scores.size}")
    if not np.all(np.isfinite(scores)):
        raise DataError("trend statistic requires finite scores")
    if n_permutations < 1:
        raise ConfigError(f"n_permutations must be >= 1, got {n_permutations}")
    if scores.size > max_points:
        edges = np.linspace(0, scores.size, max_points + 1).round().astype(np.int64)
        x = np.array([0.5 * (a + b - 1) for a, b in zip(edges, edges[1:])])
        scores = np.array([scores[a:b].mean() for a, b in zip(edges, edges[1:])])
    else:
        x = np.arange(scores.size, dtype=np.float64)
    slope = float(theilslopes(scores, x)[0])
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_permutations):
        if float(theilslopes(rng.permutation(scores), x)[0]) >= slope:
            hits += 1
    p_value = (1 + hits) / (1 + n_permutations)
    return slope, float(p_value)


def first_sustained_alarm(alarms, consecutive: int = 3):
    """Index of the first run of ``consecutive`` True values, or None.

    Requiring a short run debounces isolated false alarms: at a per-sample
    false-alarm rate of 1%, triples of chance alarms are ~1e-6 per sample.
    """
    alarms = np.asarray(alarms, dtype=bool).ravel()
    if consecutive < 1:
        raise ConfigError(f"consecutive must be >= 1, got {consecutive}")
    run = 0
    for i, flag in enumerate(alarms):
        run = run + 1 if flag else 0
        if run >= consecutive:
            return i - consecutive + 1
    return None


@dataclass(frozen=True)
class IncipientTrial:
    """One seeded run of the incipient-fault experiment for one predictor."""

    trial: int
    seed: int
    onset_index: int
    slope: float
    p_value: float
    first_alarm_index: dict  # p_fa -> absolute sample index or None
    first_alarm_day: dict  # p_fa -> fractional day or None
    alarm_fraction: dict  # p_fa -> fraction of post-onset samples alarming

    def detection_delay_days(self, p_fa: float):
        """Days from fault onset to the first sustained alarm (None if quiet)."""
        first = self.first_alarm_index.get(p_fa)
        if first is None:
            return None
        return (first - self.onset_index) / SAMPLES_PER_DAY


def run_incipient(
    spec: ExperimentSpec,
    consecutive: int = 3,
    n_permutations: int = 199,
    out_dir=None,
) -> dict:
    """Track a slowly growing fault: alarm latency and score trend per trial.

    Training always ends before the fault starts (the split index is clamped
    to the onset), thresholds come from the chi-squared law at each entry of
    ``spec.p_fa_grid``, and the first alarm requires ``consecutive``
    successive exceedances.  Returns ``{kind: [IncipientTrial, ...]}``.
    """
    fault = spec.scenario.fault
    if fault.kind != "incipient":
        raise ConfigError(
            f"run_incipient needs an incipient fault scenario, got {fault.kind!r}"
        )
    results = {kind: [] for kind in spec.predictors}
    for trial in range(spec.n_trials):
        scenario = spec.trial_scenario(trial)
        dataset = generate_dataset(scenario)
        n_samples = dataset.panel.n_samples
        n_tr = min(train_split_index(n_samples, spec.train_fraction), fault.onset_index)
        batches = batch_average(dataset.panel, spec.n_batches)
        for kind, hyper in spec.predictors.items():
            pipe = build_pipeline(
                batches,
                kind,
                hyperparams=hyper,
                n_batches=spec.n_batches,
                window=spec.window,
                n_tr=n_tr,
            )
            scores = pipe.smd_series(batches, n_tr)
            post = scores[fault.onset_index - n_tr :]
            slope, p_value = trend_statistic(
                post, n_permutations=n_permutations, seed=spec.trial_seed(trial)
            )
            first_alarm_index = {}
            first_alarm_day = {}
            alarm_fraction = {}
            for p_fa in spec.p_fa_grid:
                threshold = threshold_theoretical(p_fa, spec.n_batches)
                alarms = scores > threshold
                first = first_sustained_alarm(alarms, consecutive)
                absolute = None if first is None else n_tr + first
                first_alarm_index[p_fa] = absolute
                first_alarm_day[p_fa] = (
                    None if absolute is None else absolute / SAMPLES_PER_DAY
                )
                post_alarms = alarms[fault.onset_index - n_tr :]
                alarm_fraction[p_fa] = float(np.mean(post_alarms))
            results[kind].append(
                IncipientTrial(
                    trial=trial,
                    seed=spec.trial_seed(trial),
                    onset_index=fault.onset_index,
                    slope=slope,
                    p_value=p_value,
                    first_alarm_index=first_alarm_index,
                    first_alarm_day=first_alarm_day,
                    alarm_fraction=alarm_fraction,
                )
            )
    if out_dir is not None:
        for kind, trials in results.items():
            path = result_path(out_dir, "incipient", kind, spec.seed_base, "csv")
            lines = [
                "trial,seed,p_fa,first_alarm_index,first_alarm_day,"
                "alarm_fraction,slope,p_value"
            ]
            for t in trials:
                for p_fa in spec.p_fa_grid:
                    first = t.first_alarm_index[p_fa]
                    day = t.first_alarm_day[p_fa]
                    lines.append(
                        f"{t.trial},{t.seed},{p_fa},"
                        f"{'' if first is None else first},"
                        f"{'' if day is None else repr(day)},"
                        f"{repr(t.alarm_fraction[p_fa])},"
                        f"{repr(t.slope)},{repr(t.p_value)}"
                    )
            path.write_text("\n".join(lines) + "\n")
    return results


def incipient_summary(trials: list, p_fa: float) -> dict:
    """Median delay/trend over one predictor's incipient trials."""
    delays = [t.detection_delay_days(p_fa) for t in trials]
    detected = [d for d in delays if d is not None]
    return {
        "p_fa": p_fa,
        "n_trials": len(trials),
        "n_detected": len(detected),
        "median_delay_days": float(np.median(detected)) if detected else None,
        "median_slope": float(np.median([t.slope for t in trials])),
        "median_p_value": float(np.median([t.p_value for t in trials])),
        "mean_alarm_fraction": float(
            np.mean([t.alarm_fraction[p_fa] for t in trials])
        ),
    }
