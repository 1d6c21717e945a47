"""Experiment-harness tests: ROC machinery, forecasting benchmark, transfer,
and incipient-fault tracking.

Two topology regimes appear on purpose.  Detection-oriented runs use the
stock network (200 m branch), where batch averaging cancels the load comb
and fault level shifts stand directly against the perturbation noise.
Forecasting-oriented runs use the bundled experiment topology (10 m branch),
where the daily load signature survives batch averaging and gives the
predictors something to forecast.
"""

import dataclasses
import json

import numpy as np
import pytest

from plcdiag.emulator import (
    BandSpec,
    FaultSpec,
    Scenario,
    TopologySpec,
    days_to_samples,
    generate_dataset,
)
from plcdiag.errors import ConfigError, DataError
from plcdiag.evaluation import (
    ExperimentSpec,
    RocCurve,
    benchmark_summary,
    experiment_scenario,
    first_sustained_alarm,
    incipient_summary,
    result_path,
    run_incipient,
    run_predictor_benchmark,
    run_roc,
    run_transfer,
    trend_statistic,
)
from plcdiag.loads import CyclicProfile, ShockParams
from plcdiag.pipeline import build_pipeline
from plcdiag.timeseries import batch_average, train_split_index


def white_noise_scenario(days: float, seed: int, n_sc: int = 45) -> Scenario:
    """Frozen load (zero harmonics, degenerate shocks): the batch series is
    a constant plus iid Gaussian perturbation noise."""
    return dataclasses.replace(
        experiment_scenario(days=days, seed=seed),
        band=BandSpec(n_subcarriers=n_sc),
        profile=CyclicProfile(harmonics=((1, 0.0, 0.0),)),
        shocks=ShockParams(real_low=0, real_high=0, imag_low=0, imag_high=0),
    )


def stock_fault_scenario(days: float, fault: FaultSpec, seed: int = 0) -> Scenario:
    return Scenario(fault=fault, n_samples=days_to_samples(days), seed=seed)


class TestRocCurve:
    def test_separated_scores_give_auc_one(self):
        curve = RocCurve.from_scores([2.0, 3.0, 4.0], [0.0, 0.5, 1.0], 3)
        assert curve.auc == 1.0
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)

    def test_reversed_scores_give_auc_zero(self):
        curve = RocCurve.from_scores([0.0, 0.5], [2.0, 3.0], 2)
        assert curve.auc == 0.0

    def test_hand_computed_auc(self):
        # P(fault > healthy) over pairs {(3,2),(3,0),(1,2),(1,0)} = 3/4.
        curve = RocCurve.from_scores([3.0, 1.0], [2.0, 0.0], 2)
        assert curve.auc == pytest.approx(0.75, abs=1e-12)

    def test_endpoints_bracket_threshold_sweep(self):
        # The first point is the threshold-above-everything corner and the
        # last is the threshold-below-everything corner.
        rng = np.random.default_rng(0)
        curve = RocCurve.from_scores(rng.chisquare(9, 40), rng.chisquare(9, 60), 40)
        xs = [p[0] for p in curve.points]
        ys = [p[1] for p in curve.points]
        assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
        assert all(b >= a for a, b in zip(xs, xs[1:]))
        assert all(b >= a for a, b in zip(ys, ys[1:]))

    def test_detection_at_is_monotone_in_p_fa(self):
        rng = np.random.default_rng(1)
        curve = RocCurve.from_scores(rng.chisquare(9, 50) + 4, rng.chisquare(9, 50), 50)
        dets = [curve.detection_at(p) for p in (0.0, 0.1, 0.5, 1.0)]
        assert all(b >= a for a, b in zip(dets, dets[1:]))
        assert dets[-1] == 1.0

    def test_empty_or_nonfinite_scores_rejected(self):
        with pytest.raises(DataError):
            RocCurve.from_scores([], [1.0], 1)
        with pytest.raises(DataError):
            RocCurve.from_scores([1.0], [], 1)
        with pytest.raises(DataError):
            RocCurve.from_scores([np.nan], [1.0], 1)

    def test_constructor_validates_points(self):
        with pytest.raises(DataError):
            RocCurve(points=((0.0, 0.0), (0.5, 0.2)), auc=0.5, trial_count=1)
        with pytest.raises(DataError):
            RocCurve(points=((0.0, 0.0), (0.6, 0.9), (0.4, 1.0), (1.0, 1.0)),
                     auc=0.5, trial_count=1)
        with pytest.raises(DataError):
            RocCurve(points=((0.0, 0.0), (1.0, 1.0)), auc=1.5, trial_count=1)

    def test_csv_round_trip(self, tmp_path):
        curve = RocCurve.from_scores([3.0, 1.0], [2.0, 0.0], 2)
        path = curve.write_csv(tmp_path / "roc.csv")
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "p_fa,p_dt"
        parsed = [tuple(float(v) for v in line.split(",")) for line in lines[1:]]
        assert tuple(parsed) == curve.points


class TestExperimentSpec:
    def test_trial_scenarios_differ_only_in_seed(self):
        spec = ExperimentSpec(scenario=white_noise_scenario(6, 0), seed_base=40)
        s0, s1 = spec.trial_scenario(0), spec.trial_scenario(1)
        assert s0.seed == 40 and s1.seed == 41
        assert dataclasses.replace(s0, seed=41) == s1

    def test_validation(self):
        scenario = white_noise_scenario(6, 0)
        with pytest.raises(ConfigError):
            ExperimentSpec(scenario=scenario, predictors={})
        with pytest.raises(ConfigError):
            ExperimentSpec(scenario=scenario, predictors={"arima": 3})
        with pytest.raises(ConfigError):
            ExperimentSpec(scenario=scenario, n_trials=0)
        with pytest.raises(ConfigError):
            ExperimentSpec(scenario=scenario, p_fa_grid=())
        with pytest.raises(ConfigError):
            ExperimentSpec(scenario=scenario, p_fa_grid=(0.0,))
        with pytest.raises(ConfigError):
            ExperimentSpec(scenario=scenario, train_fraction=1.0)
        with pytest.raises(ConfigError):
            ExperimentSpec(scenario=scenario, window=0)


class TestPredictorBenchmark:
    def test_constant_mean_predictor_scores_unity(self):
        # On stationary noise the train and test means agree, so predicting
        # the training mean scores 1.0 by the definition of the metric.
        spec = ExperimentSpec(
            scenario=white_noise_scenario(12, 0),
            predictors={"avg": {}},
            window=24, n_batches=3, n_trials=5, seed_base=100,
        )
        records = run_predictor_benchmark(spec)
        assert len(records) == 5
        for record in records:
            assert record["error"] is None
            assert record["rmse"] == pytest.approx(1.0, abs=0.02)

    def test_requires_healthy_scenario(self):
        n = days_to_samples(6.0)
        scenario = stock_fault_scenario(
            6.0, FaultSpec(kind="distributed", onset_index=n - 60, severity_fraction=0.5)
        )
        spec = ExperimentSpec(scenario=scenario, predictors={"avg": {}})
        with pytest.raises(ConfigError):
            run_predictor_benchmark(spec)

    def test_fit_failures_recorded_per_cell(self):
        # A window longer than the training split cannot be fitted; the cell
        # records the failure instead of aborting the run.
        spec = ExperimentSpec(
            scenario=white_noise_scenario(6, 0),
            predictors={"avg": {}, "arima": {}},
            window=500, n_batches=3, n_trials=1,
        )
        records = run_predictor_benchmark(spec)
        failed = [r for r in records if r["predictor"] == "arima"]
        assert failed[0]["rmse"] is None
        assert "InsufficientDataError" in failed[0]["error"]

    def test_summary_counts_failures(self):
        records = [
            {"predictor": "a", "rmse": 1.0, "error": None},
            {"predictor": "a", "rmse": None, "error": "boom"},
        ]
        summary = benchmark_summary(records)
        assert summary["a"]["n_trials"] == 2
        assert summary["a"]["n_failed"] == 1
        assert summary["a"]["mean_rmse"] == 1.0

    def test_writes_one_csv_per_predictor(self, tmp_path):
        spec = ExperimentSpec(
            scenario=white_noise_scenario(6, 0),
            predictors={"avg": {}, "baseline": {}},
            window=12, n_batches=3, n_trials=2, seed_base=9,
        )
        run_predictor_benchmark(spec, out_dir=tmp_path)
        for kind in ("avg", "baseline"):
            path = tmp_path / f"benchmark_{kind}_9.csv"
            assert path.exists()
            lines = path.read_text().strip().split("\n")
            assert lines[0] == "trial,seed,rmse,error"
            assert len(lines) == 3

    @pytest.mark.slow
    def test_white_noise_floor_for_every_predictor(self):
        # No predictor kind should pretend to beat the noise floor: median
        # normalized RMSE over 20 seeds stays at or above 0.95.
        spec = ExperimentSpec(
            scenario=white_noise_scenario(6, 0),
            predictors={
                "baseline": {},
                "avg": {},
                "arima": {},
                "l2boost": {},
                "ffnn": {"hidden": 4, "epochs": 80, "seed": 0},
                "lstm": {"hidden": 4, "epochs": 50, "seed": 0},
            },
            window=12, n_batches=3, n_trials=20, seed_base=1000,
        )
        records = run_predictor_benchmark(spec)
        by_kind = {}
        for record in records:
            assert record["error"] is None, record
            by_kind.setdefault(record["predictor"], []).append(record["rmse"])
        for kind, values in by_kind.items():
            assert np.median(values) >= 0.95, (kind, sorted(values))

    @pytest.mark.slow
    def test_learned_predictors_beat_naive_references(self):
        # On the load-driven dataset the daily cycle is predictable: the
        # recurrent net outperforms last-value extrapolation, and everything
        # outperforms the constant mean.
        spec = ExperimentSpec(
            scenario=experiment_scenario(days=12.0),
            predictors={
                "baseline": {},
                "avg": {},
                "lstm": {"hidden": 6, "epochs": 150, "seed": 0},
            },
            window=96, n_trials=1, seed_base=7,
        )
        summary = benchmark_summary(run_predictor_benchmark(spec))
        baseline = summary["baseline"]["mean_rmse"]
        assert np.isfinite(baseline)
        assert summary["lstm"]["mean_rmse"] <= baseline
        assert baseline < summary["avg"]["mean_rmse"]


def _medium_df_spec(n_trials=20, seed_base=0, predictors=None, severity=0.60):
    n = days_to_samples(12.0)
    onset = int(0.9 * n)  # healthy test span and faulty span nearly equal
    scenario = stock_fault_scenario(
        12.0,
        FaultSpec(kind="distributed", onset_index=onset, severity_fraction=severity),
    )
    return ExperimentSpec(
        scenario=scenario,
        predictors=predictors or {"arima": {}},
        window=96,
        n_trials=n_trials,
        seed_base=seed_base,
    )


class TestRunRoc:
    def test_medium_severity_fault_is_nearly_ideal(self):
        curves = run_roc(_medium_df_spec(), scoring="trial")
        assert curves["arima"].auc >= 0.99
        assert curves["arima"].trial_count == 20

    def test_scoring_mode_validated(self):
        with pytest.raises(ConfigError):
            run_roc(_medium_df_spec(n_trials=1), scoring="nope")

    def test_healthy_scenario_rejected(self):
        spec = ExperimentSpec(scenario=white_noise_scenario(6, 0))
        with pytest.raises(ConfigError):
            run_roc(spec)

    def test_onset_inside_training_prefix_rejected(self):
        n = days_to_samples(6.0)
        scenario = stock_fault_scenario(
            6.0, FaultSpec(kind="distributed", onset_index=n // 2, severity_fraction=0.5)
        )
        spec = ExperimentSpec(scenario=scenario, n_trials=1)
        with pytest.raises(ConfigError):
            run_roc(spec)

    def test_bit_for_bit_reproducible(self):
        n = days_to_samples(6.0)
        scenario = dataclasses.replace(
            white_noise_scenario(6, 0),
            fault=FaultSpec(kind="distributed", onset_index=int(0.9 * n),
                            severity_fraction=0.6),
        )
        spec = ExperimentSpec(
            scenario=scenario,
            predictors={"baseline": {}, "avg": {}},
            window=24, n_batches=9, n_trials=3, seed_base=17,
        )
        first = run_roc(spec, scoring="trial")
        second = run_roc(spec, scoring="trial")
        for kind in spec.predictors:
            assert first[kind].points == second[kind].points
            assert first[kind].auc == second[kind].auc

    def test_emits_one_curve_file_per_predictor(self, tmp_path):
        spec = _medium_df_spec(n_trials=2, seed_base=5,
                               predictors={"baseline": {}, "avg": {}})
        curves = run_roc(spec, out_dir=tmp_path)
        for kind in spec.predictors:
            csv_path = tmp_path / f"roc_{kind}_5.csv"
            json_path = tmp_path / f"roc_{kind}_5.json"
            assert csv_path.exists() and json_path.exists()
            summary = json.loads(json_path.read_text())
            assert summary["auc"] == curves[kind].auc
            assert summary["trial_count"] == 2

    def test_per_sample_and_hybrid_modes_run(self):
        spec = _medium_df_spec(n_trials=2, predictors={"avg": {}})
        per_sample = run_roc(spec, scoring="per_sample")["avg"]
        hybrid = run_roc(spec, scoring="hybrid")["avg"]
        assert 0.0 <= per_sample.auc <= 1.0
        assert 0.0 <= hybrid.auc <= 1.0

    @pytest.mark.slow
    def test_auc_nondecreasing_in_severity(self):
        kinds = {"baseline": {}, "avg": {}, "arima": {}, "l2boost": {}}
        aucs = {kind: [] for kind in kinds}
        for severity in (0.10, 0.20, 0.60):
            spec = _medium_df_spec(seed_base=50, predictors=kinds, severity=severity)
            curves = run_roc(spec, scoring="trial")
            for kind in kinds:
                aucs[kind].append(curves[kind].auc)
        for kind, values in aucs.items():
            assert values[0] <= values[1] <= values[2], (kind, values)

    def test_healthy_scores_stay_at_chance_level(self):
        # Pseudo-labels on healthy data (alternating samples, so the daily
        # phase is balanced) must not be separable: pooled per-sample AUC
        # over 50 seeded trials stays at chance.
        n = days_to_samples(12.0)
        n_tr = train_split_index(n, 0.8)
        fault_scores, healthy_scores = [], []
        for trial in range(50):
            dataset = generate_dataset(Scenario(n_samples=n, seed=3000 + trial))
            batches = batch_average(dataset.panel, 9)
            pipe = build_pipeline(batches, "baseline", n_batches=9, window=96, n_tr=n_tr)
            scores = pipe.smd_series(batches, n_tr)
            healthy_scores.extend(scores[0::2])
            fault_scores.extend(scores[1::2])
        curve = RocCurve.from_scores(fault_scores, healthy_scores, 50)
        assert 0.45 <= curve.auc <= 0.55


class TestRunTransfer:
    def test_self_transfer_alarm_rate_matches_target(self):
        # Training and scoring the same healthy data with the empirically
        # calibrated threshold must reproduce the false-alarm target.
        dataset = generate_dataset(experiment_scenario(days=24.0, seed=11))
        result = run_transfer(dataset, dataset, "arima",
                              p_fa=0.05, threshold_mode="empirical")
        fraction = result.report.summary()["alarm_fraction"]
        assert abs(fraction - 0.05) <= 0.005

    def test_cross_network_transfer_detects_fault(self):
        # Detector built on L3-driven data applied to an L1-driven network
        # with a hard shunt fault: the faulty span alarms, and the healthy
        # span's false-alarm rate stays within 3x the 1% target.
        n = days_to_samples(12.0)
        onset = int(0.9 * n)
        source = generate_dataset(Scenario(n_samples=n, seed=500))
        target = generate_dataset(Scenario(
            topology=TopologySpec(branch_load_model="l1"),
            n_samples=n, seed=501,
            fault=FaultSpec(kind="concentrated", onset_index=onset,
                            location_m=100.0, fault_resistance_ohm=100.0),
        ))
        result = run_transfer(source, target, "arima",
                              p_fa=0.01, threshold_mode="theoretical")
        alarms = result.report.alarms
        split = onset - result.start_index
        assert alarms[split:].any()
        assert alarms[:split].mean() <= 0.03

    def test_same_network_fault_alarm_latency(self):
        # With a strict threshold the first alarm lands on the onset sample.
        n = days_to_samples(12.0)
        onset = int(0.9 * n)
        l1 = TopologySpec(branch_load_model="l1")
        source = generate_dataset(Scenario(topology=l1, n_samples=n, seed=801))
        target = generate_dataset(Scenario(
            topology=l1, n_samples=n, seed=802,
            fault=FaultSpec(kind="distributed", onset_index=onset,
                            severity_fraction=0.60),
        ))
        result = run_transfer(source, target, "arima",
                              p_fa=1e-4, threshold_mode="theoretical")
        assert result.first_alarm_absolute is not None
        assert abs(result.first_alarm_absolute - onset) <= 4

    def test_batch_configuration_mismatch_rejected(self):
        a = generate_dataset(white_noise_scenario(6, 0, n_sc=45))
        b = generate_dataset(white_noise_scenario(6, 1, n_sc=44))
        with pytest.raises(DataError):
            run_transfer(a, b, "baseline", window=24, n_batches=9)

    def test_threshold_mode_and_start_validated(self):
        dataset = generate_dataset(white_noise_scenario(6, 0))
        with pytest.raises(ConfigError):
            run_transfer(dataset, dataset, "baseline", window=24,
                         threshold_mode="guess")
        with pytest.raises(ConfigError):
            run_transfer(dataset, dataset, "baseline", window=24, start=5)
        with pytest.raises(ConfigError):
            run_transfer(dataset, dataset, "baseline", window=24,
                         start=dataset.panel.n_samples)

    def test_report_indexing_is_absolute_from_start(self):
        dataset = generate_dataset(white_noise_scenario(6, 0))
        result = run_transfer(dataset, dataset, "baseline", window=24,
                              p_fa=0.5, threshold_mode="theoretical")
        assert result.start_index == 24
        first = result.report.first_alarm_index
        assert result.first_alarm_absolute == 24 + first


def incipient_scenario(days, onset_days, peak_scale, seed=0):
    n = days_to_samples(days)
    fault = FaultSpec(kind="incipient", onset_index=days_to_samples(onset_days),
                      ramp_end_index=n - 1, peak_scale=peak_scale)
    return dataclasses.replace(experiment_scenario(days=days, seed=seed), fault=fault)


class TestTrendStatistic:
    def test_clear_ramp_is_significant(self):
        rng = np.random.default_rng(0)
        series = np.linspace(0, 5, 300) + rng.normal(0, 0.5, 300)
        slope, p_value = trend_statistic(series, seed=1)
        assert slope > 0
        assert p_value == pytest.approx(1 / 200)

    def test_block_averaging_keeps_trend_power(self):
        # A weak trend over a long series stays detectable after the series
        # is reduced to block means.
        rng = np.random.default_rng(2)
        series = np.linspace(0, 1.5, 6000) + rng.normal(0, 4.0, 6000)
        slope, p_value = trend_statistic(series, seed=3)
        assert slope > 0
        assert p_value < 0.01

    def test_slope_is_per_original_sample(self):
        series = np.linspace(0.0, 10.0, 4000)  # exact rate 10/3999 per sample
        slope, _ = trend_statistic(series, n_permutations=1, seed=0)
        assert slope == pytest.approx(10.0 / 3999.0, rel=1e-6)

    def test_pure_noise_is_not_significant(self):
        rng = np.random.default_rng(4)
        _, p_value = trend_statistic(rng.normal(0, 1, 500), seed=5)
        assert p_value > 0.05

    def test_validation(self):
        with pytest.raises(DataError):
            trend_statistic([1.0, 2.0])
        with pytest.raises(DataError):
            trend_statistic([1.0, np.nan, 2.0])
        with pytest.raises(ConfigError):
            trend_statistic([1.0, 2.0, 3.0], n_permutations=0)


class TestFirstSustainedAlarm:
    def test_requires_full_run(self):
        assert first_sustained_alarm([0, 1, 1, 1, 0], consecutive=3) == 1
        assert first_sustained_alarm([1, 1, 0, 1, 1], consecutive=3) is None
        assert first_sustained_alarm([0, 0, 1], consecutive=1) == 2
        assert first_sustained_alarm([], consecutive=2) is None

    def test_validation(self):
        with pytest.raises(ConfigError):
            first_sustained_alarm([True], consecutive=0)


class TestRunIncipient:
    def test_requires_incipient_fault(self):
        spec = ExperimentSpec(scenario=white_noise_scenario(6, 0))
        with pytest.raises(ConfigError):
            run_incipient(spec)

    def test_zero_severity_ramp_behaves_like_healthy_data(self):
        # peak_scale 0 degenerates to no fault: alarm rate stays near the
        # target, no sustained alarm fires, and no trend is detected.
        spec = ExperimentSpec(
            scenario=incipient_scenario(24.0, 12.0, peak_scale=0.0),
            predictors={"arima": {}},
            window=96, n_trials=3, seed_base=51, p_fa_grid=(0.01,),
        )
        trials = run_incipient(spec)["arima"]
        for trial in trials:
            assert 0.002 <= trial.alarm_fraction[0.01] <= 0.03
            assert trial.first_alarm_index[0.01] is None
            assert trial.p_value > 0.05

    def test_growing_fault_trend_and_latency(self):
        # A level-tracking detector sees the growing fault: strong positive
        # trend, detection shortly after onset, and stricter thresholds can
        # only delay the first sustained alarm.  Training is clamped to the
        # onset, so scores start exactly at the fault's first sample.
        spec = ExperimentSpec(
            scenario=incipient_scenario(132.0, 66.0, peak_scale=2.0),
            predictors={"avg": {}},
            window=96, n_trials=1, seed_base=900,
            p_fa_grid=(0.05, 0.01, 0.002),
        )
        trial = run_incipient(spec)["avg"][0]
        assert trial.slope > 0
        assert trial.p_value <= 0.01
        assert trial.onset_index == days_to_samples(66.0)
        firsts = [trial.first_alarm_index[p] for p in (0.05, 0.01, 0.002)]
        assert all(f is not None for f in firsts)
        assert firsts[0] <= firsts[1] <= firsts[2]
        day = trial.first_alarm_day[0.01]
        assert 66.0 < day < 132.0
        assert trial.detection_delay_days(0.01) == pytest.approx(day - 66.0)
        assert trial.alarm_fraction[0.01] > 0.5

    @pytest.mark.xfail(
        strict=True,
        reason="a first-difference forecaster tracks the slowly drifting "
        "level this fault produces, so its prediction errors carry no "
        "detectable trend; level-aware predictors are required here",
    )
    def test_differencing_predictor_sees_growing_fault(self):
        spec = ExperimentSpec(
            scenario=incipient_scenario(132.0, 66.0, peak_scale=2.0),
            predictors={"arima": {}},
            window=96, n_trials=1, seed_base=41, p_fa_grid=(0.01,),
        )
        trial = run_incipient(spec)["arima"][0]
        assert trial.slope > 0
        assert trial.p_value < 0.01

    def test_summary_and_csv(self, tmp_path):
        spec = ExperimentSpec(
            scenario=incipient_scenario(24.0, 12.0, peak_scale=2.0),
            predictors={"avg": {}},
            window=96, n_trials=2, seed_base=60, p_fa_grid=(0.01,),
        )
        trials = run_incipient(spec, out_dir=tmp_path)["avg"]
        summary = incipient_summary(trials, 0.01)
        assert summary["n_trials"] == 2
        assert summary["n_detected"] == 2
        assert summary["median_delay_days"] > 0
        assert summary["median_slope"] > 0
        path = tmp_path / "incipient_avg_60.csv"
        lines = path.read_text().strip().split("\n")
        assert lines[0].startswith("trial,seed,p_fa,first_alarm_index")
        assert len(lines) == 3


class TestResultPath:
    def test_creates_directory_and_names_file(self, tmp_path):
        path = result_path(tmp_path / "sub", "roc", "arima", 3, "csv")
        assert path == tmp_path / "sub" / "roc_arima_3.csv"
        assert path.parent.is_dir()
