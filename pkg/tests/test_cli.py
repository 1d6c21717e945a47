"""End-to-end command-line tests.

Every test drives the real entry point: either in-process through
``plcdiag.cli.main`` (fast, returns the exit code) or through a subprocess
where process-level behavior (environment variables, byte-identical file
output across interpreter runs) is the point.
"""

import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from plcdiag.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_NUMERICAL,
    EXIT_OK,
    main,
)

BAND_90 = {"n_subcarriers": 90}


def write_config(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1))
    return str(path)


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_cli(args, env_extra=None, cwd=None):
    env = dict(os.environ)
    env.update(env_extra or {})
    return subprocess.run(
        [sys.executable, "-m", "plcdiag", *args],
        capture_output=True, text=True, env=env, cwd=cwd,
    )


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A healthy 12-day dataset plus trained models, shared across tests."""
    root = tmp_path_factory.mktemp("cli")
    gen = write_config(root / "gen.json", {
        "command": "generate",
        "scenario": {"duration_days": 12, "seed": 3, "band": BAND_90},
        "paths": {"output": str(root / "run/data")},
    })
    assert main(["generate", "--config", gen]) == EXIT_OK
    train = write_config(root / "train.json", {
        "paths": {"input": str(root / "run/data"),
                  "output": str(root / "run/models")},
        "predictor": {"kind": "arima"},
        "pipeline": {"window": 96},
    })
    assert main(["train", "--config", train]) == EXIT_OK
    return root


class TestGenerate:
    def test_row_count_is_days_times_samples_per_day(self, tmp_path):
        cfg = write_config(tmp_path / "gen.json", {
            "scenario": {"duration_days": 664, "seed": 1,
                         "band": {"n_subcarriers": 2}},
            "paths": {"output": str(tmp_path / "long/data")},
        })
        assert main(["generate", "--config", cfg]) == EXIT_OK
        lines = (tmp_path / "long/data.csv").read_text().count("\n")
        assert lines == 664 * 96 + 1  # data rows plus header

    def test_reruns_are_byte_identical(self, workspace, tmp_path):
        cfg = write_config(tmp_path / "gen.json", {
            "scenario": {"duration_days": 12, "seed": 3, "band": BAND_90},
            "paths": {"output": str(tmp_path / "again/data")},
        })
        assert main(["generate", "--config", cfg]) == EXIT_OK
        assert sha256(tmp_path / "again/data.csv") == sha256(
            workspace / "run/data.csv"
        )

    def test_manifest_reproduces_dataset(self, workspace, tmp_path):
        manifest = workspace / "run/data.manifest.json"
        assert main([
            "generate", "--config", str(manifest), "--out", str(tmp_path),
        ]) == EXIT_OK
        assert sha256(tmp_path / "dataset.csv") == sha256(workspace / "run/data.csv")

    def test_seed_flag_overrides_config(self, workspace, tmp_path):
        cfg = write_config(tmp_path / "gen.json", {
            "scenario": {"duration_days": 12, "seed": 3, "band": BAND_90},
            "paths": {"output": str(tmp_path / "seeded/data")},
        })
        assert main(["generate", "--config", cfg, "--seed", "99"]) == EXIT_OK
        manifest = json.loads((tmp_path / "seeded/data.manifest.json").read_text())
        assert manifest["seed"] == 99
        assert sha256(tmp_path / "seeded/data.csv") != sha256(
            workspace / "run/data.csv"
        )

    def test_numba_and_numpy_paths_agree_numerically(self, workspace, tmp_path):
        # The accelerated and fallback kernels sum in different orders, so
        # agreement is to rounding (~1e-15 dB), not byte-for-byte.
        cfg = write_config(tmp_path / "gen.json", {
            "scenario": {"duration_days": 12, "seed": 3, "band": BAND_90},
            "paths": {"output": "fallback/data"},
        })
        proc = run_cli(
            ["generate", "--config", cfg, "--out", str(tmp_path)],
            env_extra={"PLCDIAG_DISABLE_NUMBA": "1"},
        )
        assert proc.returncode == EXIT_OK, proc.stderr
        fallback = np.genfromtxt(
            tmp_path / "fallback/data.csv", delimiter=",", skip_header=1
        )
        default = np.genfromtxt(
            workspace / "run/data.csv", delimiter=",", skip_header=1
        )
        assert np.abs(fallback - default).max() < 1e-12


class TestIngest:
    def test_external_csv_becomes_dataset(self, workspace, tmp_path):
        cfg = write_config(tmp_path / "ingest.json", {
            "paths": {"input": str(workspace / "run/data.csv"),
                      "output": str(tmp_path / "field/data")},
        })
        assert main(["ingest", "--config", cfg]) == EXIT_OK
        manifest = json.loads((tmp_path / "field/data.manifest.json").read_text())
        assert manifest["anomaly_intervals"] == []
        assert manifest["n_samples"] == 12 * 96
        # The normalized dataset is immediately trainable.
        train = write_config(tmp_path / "train.json", {
            "paths": {"input": str(tmp_path / "field/data"),
                      "output": str(tmp_path / "field/models")},
            "predictor": {"kind": "baseline"},
            "pipeline": {"window": 96},
        })
        assert main(["train", "--config", train]) == EXIT_OK


class TestTrain:
    def test_writes_models_stats_and_report(self, workspace):
        models = workspace / "run/models"
        model_files = sorted(models.glob("model_batch_*.json"))
        assert len(model_files) == 9
        stats = json.loads((models / "error_stats.json").read_text())
        assert stats["format"] == "plcdiag-stats"
        assert len(stats["stats"]["mean"]) == 9
        assert len(stats["train_smds"]) > 0
        report = json.loads((models / "training_report.json").read_text())
        assert len(report["per_batch"]) == 9
        for entry in report["per_batch"]:
            assert entry["error"] is None
            assert np.isfinite(entry["rmse"])

    def test_retrain_writes_identical_files(self, workspace, tmp_path):
        cfg = write_config(tmp_path / "train.json", {
            "paths": {"input": str(workspace / "run/data"),
                      "output": str(tmp_path / "models")},
            "predictor": {"kind": "arima"},
            "pipeline": {"window": 96},
        })
        assert main(["train", "--config", cfg]) == EXIT_OK
        for name in [f"model_batch_{i}.json" for i in range(9)] + [
            "error_stats.json", "training_report.json",
        ]:
            assert sha256(tmp_path / "models" / name) == sha256(
                workspace / "run/models" / name
            ), name


class TestDetect:
    def test_healthy_alarm_rate_and_threshold(self, workspace, tmp_path):
        cfg = write_config(tmp_path / "detect.json", {
            "paths": {"input": str(workspace / "run/data"),
                      "models": str(workspace / "run/models"),
                      "output": str(tmp_path / "det")},
            "detector": {"p_fa": 0.01, "threshold_mode": "theoretical"},
        })
        assert main(["detect", "--config", cfg]) == EXIT_OK
        summary = json.loads((tmp_path / "det.json").read_text())
        assert summary["threshold"] == pytest.approx(21.67, abs=0.01)
        assert 0.004 <= summary["alarm_fraction"] <= 0.025
        rows = (tmp_path / "det.csv").read_text().strip().split("\n")
        assert rows[0] == "index,smd,alarm"
        assert len(rows) - 1 == summary["n_samples"]

    def test_concentrated_fault_first_alarm_at_onset(self, tmp_path):
        onset = 1036
        gen = write_config(tmp_path / "gen.json", {
            "scenario": {
                "duration_days": 12, "seed": 3, "band": BAND_90,
                "fault": {"kind": "concentrated", "onset_index": onset,
                          "location_m": 100.0, "fault_resistance_ohm": 100.0},
            },
            "paths": {"output": str(tmp_path / "data")},
        })
        assert main(["generate", "--config", gen]) == EXIT_OK
        train = write_config(tmp_path / "train.json", {
            "paths": {"input": str(tmp_path / "data"),
                      "output": str(tmp_path / "models")},
            "predictor": {"kind": "arima"},
            "pipeline": {"window": 96},
        })
        assert main(["train", "--config", train]) == EXIT_OK
        detect = write_config(tmp_path / "detect.json", {
            "paths": {"input": str(tmp_path / "data"),
                      "models": str(tmp_path / "models"),
                      "output": str(tmp_path / "det")},
            "detector": {"p_fa": 1e-5, "threshold_mode": "theoretical"},
        })
        assert main(["detect", "--config", detect]) == EXIT_OK
        summary = json.loads((tmp_path / "det.json").read_text())
        assert abs(summary["first_alarm_absolute"] - onset) <= 2

    def test_subcarrier_mismatch_is_a_data_error(self, workspace, tmp_path, capsys):
        gen = write_config(tmp_path / "gen.json", {
            "scenario": {"duration_days": 6, "seed": 4,
                         "band": {"n_subcarriers": 45}},
            "paths": {"output": str(tmp_path / "narrow/data")},
        })
        assert main(["generate", "--config", gen]) == EXIT_OK
        detect = write_config(tmp_path / "detect.json", {
            "paths": {"input": str(tmp_path / "narrow/data"),
                      "models": str(workspace / "run/models"),
                      "output": str(tmp_path / "det")},
        })
        assert main(["detect", "--config", detect]) == EXIT_DATA
        assert "batch configuration mismatch" in capsys.readouterr().err

    def test_corrupt_model_file_is_a_data_error(self, workspace, tmp_path, capsys):
        models = tmp_path / "models"
        models.mkdir()
        for path in (workspace / "run/models").iterdir():
            (models / path.name).write_bytes(path.read_bytes())
        (models / "model_batch_4.json").write_text("{not json")
        detect = write_config(tmp_path / "detect.json", {
            "paths": {"input": str(workspace / "run/data"),
                      "models": str(models),
                      "output": str(tmp_path / "det")},
        })
        assert main(["detect", "--config", detect]) == EXIT_DATA
        assert "model_batch_4" in capsys.readouterr().err


class TestConfigStrictness:
    def test_unknown_key_aborts_before_writing(self, tmp_path, capsys):
        out = tmp_path / "never"
        cfg = write_config(tmp_path / "gen.json", {
            "scenario": {"duration_days": 6},
            "paths": {"output": str(out / "data")},
            "typo_key": 1,
        })
        assert main(["generate", "--config", cfg]) == EXIT_CONFIG
        assert "typo_key" in capsys.readouterr().err
        assert not out.exists()

    def test_unknown_nested_key_reports_dotted_path(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "gen.json", {
            "scenario": {"duration_days": 6, "band": {"bogus": 1}},
        })
        assert main(["generate", "--config", cfg]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "scenario.band" in err and "bogus" in err

    def test_json_syntax_error_reports_line(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "scenario": {,}\n}\n')
        assert main(["generate", "--config", str(path)]) == EXIT_CONFIG
        assert "line 2" in capsys.readouterr().err

    def test_command_field_must_match_subcommand(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", {
            "command": "train",
            "scenario": {"duration_days": 6},
        })
        assert main(["generate", "--config", cfg]) == EXIT_CONFIG
        assert "subcommand" in capsys.readouterr().err

    def test_missing_input_dataset_rejected_up_front(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "t.json", {
            "paths": {"input": str(tmp_path / "absent"),
                      "output": str(tmp_path / "models")},
        })
        assert main(["train", "--config", cfg]) == EXIT_CONFIG
        assert "not found" in capsys.readouterr().err
        assert not (tmp_path / "models").exists()

    def test_unknown_predictor_kind_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "t.json", {
            "paths": {"input": "x", "output": "y"},
            "predictor": {"kind": "oracle"},
        })
        assert main(["train", "--config", cfg]) == EXIT_CONFIG
        assert "oracle" in capsys.readouterr().err

    def test_yaml_config_accepted_and_yaml_errors_located(self, tmp_path, capsys):
        good = tmp_path / "gen.yaml"
        good.write_text(
            "scenario:\n  duration_days: 6\n  seed: 2\n"
            "  band: {n_subcarriers: 45}\n"
            f"paths: {{output: {tmp_path / 'y/data'}}}\n"
        )
        assert main(["generate", "--config", str(good)]) == EXIT_OK
        assert (tmp_path / "y/data.csv").exists()
        bad = tmp_path / "bad.yaml"
        bad.write_text("scenario:\n  duration_days: [\n")
        assert main(["generate", "--config", str(bad)]) == EXIT_CONFIG
        assert "line" in capsys.readouterr().err


class TestNumericalFailures:
    def test_degenerate_training_data_exits_numerical(self, tmp_path, capsys):
        from plcdiag.timeseries import SnrPanel, write_panel_csv

        # Constant data has a singular error covariance: the pipeline must
        # fail loudly with the numerical exit code, not emit models.
        panel = SnrPanel(np.full((60, 9), 40.0))
        write_panel_csv(tmp_path / "flat.csv", panel)
        cfg = write_config(tmp_path / "t.json", {
            "paths": {"input": str(tmp_path / "flat"),
                      "output": str(tmp_path / "models")},
            "predictor": {"kind": "baseline"},
            "pipeline": {"window": 12},
        })
        assert main(["train", "--config", cfg]) == EXIT_NUMERICAL
        assert "positive definite" in capsys.readouterr().err.lower()


class TestExperimentCommands:
    def test_roc_command_writes_curves(self, tmp_path):
        cfg = write_config(tmp_path / "roc.json", {
            "scenario": {
                "duration_days": 6, "seed": 0, "band": {"n_subcarriers": 45},
                "fault": {"kind": "distributed", "onset_day": 5.4,
                          "severity_fraction": 0.6},
            },
            "experiment": {"predictors": {"baseline": {}, "avg": {}},
                           "n_trials": 2, "seed_base": 5},
            "pipeline": {"window": 24},
        })
        assert main(["roc", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
        for kind in ("baseline", "avg"):
            assert (tmp_path / f"roc_{kind}_5.csv").exists()
            summary = json.loads((tmp_path / f"roc_{kind}_5.json").read_text())
            assert 0.0 <= summary["auc"] <= 1.0

    def test_benchmark_command_writes_summary(self, tmp_path):
        cfg = write_config(tmp_path / "bench.json", {
            "scenario": {
                "duration_days": 6, "seed": 0, "band": {"n_subcarriers": 45},
                "profile": {"harmonics": [[1, 0.0, 0.0]]},
                "shocks": {"real_low": 0, "real_high": 0,
                           "imag_low": 0, "imag_high": 0},
            },
            "experiment": {"predictors": {"avg": {}}, "n_trials": 2,
                           "seed_base": 9},
            "pipeline": {"window": 12, "n_batches": 3},
        })
        assert main(["benchmark", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
        summary = json.loads((tmp_path / "benchmark_summary_9.json").read_text())
        assert summary["avg"]["n_failed"] == 0
        assert summary["avg"]["mean_rmse"] == pytest.approx(1.0, abs=0.05)

    def test_transfer_command_reports_alarms(self, tmp_path):
        cfg = write_config(tmp_path / "transfer.json", {
            "scenario": {"duration_days": 6, "seed": 20,
                         "band": {"n_subcarriers": 45}},
            "transfer": {"target_scenario": {
                "duration_days": 6, "seed": 21, "band": {"n_subcarriers": 45},
                "topology": {"branch_load_model": "l1"},
                "fault": {"kind": "concentrated", "onset_day": 5.4,
                          "location_m": 100.0, "fault_resistance_ohm": 100.0},
            }},
            "predictor": {"kind": "arima"},
            "detector": {"p_fa": 0.01, "threshold_mode": "theoretical"},
        })
        assert main(["transfer", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
        summary = json.loads((tmp_path / "transfer_arima_0.json").read_text())
        assert summary["first_alarm_absolute"] is not None
        assert (tmp_path / "transfer_arima_0.csv").exists()

    def test_incipient_command_writes_summary(self, tmp_path):
        cfg = write_config(tmp_path / "inc.json", {
            "scenario": {
                "duration_days": 24, "seed": 60, "band": BAND_90,
                "topology": {"branch_m": 10.0},
                "fault": {"kind": "incipient", "onset_day": 12,
                          "ramp_end_index": 2303, "peak_scale": 2.0},
            },
            "experiment": {"predictors": {"avg": {}}, "n_trials": 1,
                           "seed_base": 60, "p_fa_grid": [0.01]},
            "incipient": {"n_permutations": 99},
        })
        assert main(["incipient", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "incipient_avg_60.csv").exists()
        summary = json.loads((tmp_path / "incipient_summary_60.json").read_text())
        assert summary["avg"]["0.01"]["n_detected"] == 1

    def test_transfer_requires_exactly_one_source(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "t.json", {
            "transfer": {"target_scenario": {"duration_days": 6}},
        })
        assert main(["transfer", "--config", cfg]) == EXIT_CONFIG
        assert "training source" in capsys.readouterr().err


class TestProcessInterface:
    def test_version_flag(self):
        proc = run_cli(["--version"])
        assert proc.returncode == 0
        assert "plcdiag" in proc.stdout

    def test_missing_subcommand_is_usage_error(self):
        proc = run_cli([])
        assert proc.returncode == 2

    def test_out_dir_env_var(self, tmp_path):
        cfg = write_config(tmp_path / "gen.json", {
            "scenario": {"duration_days": 6, "seed": 2,
                         "band": {"n_subcarriers": 45}},
            "paths": {"output": "envrun/data"},
        })
        proc = run_cli(
            ["generate", "--config", cfg],
            env_extra={"PLCDIAG_OUT_DIR": str(tmp_path)},
        )
        assert proc.returncode == EXIT_OK, proc.stderr
        assert (tmp_path / "envrun/data.csv").exists()

    def test_verbose_logs_to_stderr(self, tmp_path):
        cfg = write_config(tmp_path / "gen.json", {
            "scenario": {"duration_days": 6, "seed": 2,
                         "band": {"n_subcarriers": 45}},
            "paths": {"output": str(tmp_path / "v/data")},
        })
        proc = run_cli(["generate", "--config", cfg, "--verbose"])
        assert proc.returncode == EXIT_OK
        assert "INFO" in proc.stderr
