"""Command-line interface: one binary, eight subcommands.

Every run is driven by a JSON config (``--config``); flags only override the
seed, the output directory, and verbosity.  Outputs are CSV plus JSON
manifests so that any artifact can be regenerated from the files next to it.

Subcommands
-----------
``generate``    synthesize an SNR dataset from a scenario (or a manifest)
``ingest``      normalize an external SNR CSV into the dataset layout
``train``       fit one predictor per batch plus error statistics
``detect``      score a dataset against trained models and emit alarms
``roc``         detection ROC curves over seeded trials
``benchmark``   healthy-data forecasting accuracy per predictor kind
``transfer``    train on one network, detect on another
``incipient``   growing-fault trend and first-alarm latency

Exit codes
----------
===  =======================================================
0    success
2    configuration rejected (also used by argument parsing)
3    input data or stored artifact invalid or missing
4    numerical failure during computation
===  =======================================================
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, OUT_DIR_ENV, RunConfig, load_config, validate_inputs
from .detector import (
    DetectionReport,
    ErrorStats,
    threshold_empirical,
    threshold_theoretical,
)
from .emulator import (
    Dataset,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .emulator.synthesis import MANIFEST_VERSION
from .errors import ConfigError, DataError, ModelIOError, NumericalError
from .evaluation import (
    ExperimentSpec,
    benchmark_summary,
    first_sustained_alarm,
    incipient_summary,
    run_incipient,
    run_predictor_benchmark,
    run_roc,
    run_transfer,
)
from .forecasting import load_model, save_model
from .pipeline import BatchPipeline, batch_rmse_report, build_pipeline
from .timeseries import batch_average, read_panel_csv

log = logging.getLogger("plcdiag")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

STATS_FORMAT = "plcdiag-stats"
STATS_VERSION = 1

MODEL_FILE_PATTERN = "model_batch_{index}.json"
STATS_FILE_NAME = "error_stats.json"
REPORT_FILE_NAME = "training_report.json"


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _effective_scenario(cfg: RunConfig):
    """The config's scenario with the run seed folded in."""
    scenario = cfg.scenario
    if scenario is not None and cfg.seed is not None:
        scenario = dataclasses.replace(scenario, seed=cfg.seed)
    return scenario


def _experiment_spec(cfg: RunConfig) -> ExperimentSpec:
    scenario = _effective_scenario(cfg)
    if scenario is None:
        raise ConfigError(f"the {cfg.command} command requires a scenario section")
    predictors = cfg.experiment_predictors or {cfg.predictor_kind: dict(cfg.predictor_hyperparams)}
    seed_base = cfg.seed if cfg.seed is not None else cfg.seed_base
    return ExperimentSpec(
        scenario=scenario,
        predictors=predictors,
        window=cfg.window,
        n_batches=cfg.n_batches,
        train_fraction=cfg.train_fraction,
        p_fa_grid=cfg.p_fa_grid,
        n_trials=cfg.n_trials,
        seed_base=seed_base,
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(cfg: RunConfig) -> None:
    scenario = cfg.scenario
    dataset = generate_dataset(scenario, seed=cfg.seed)
    base = cfg.resolve_output("dataset")
    csv_path, manifest_path = write_dataset(base, dataset)
    log.info("scenario seed %s, %d samples", dataset.manifest["seed"], scenario.n_samples)
    print(
        f"wrote {csv_path} ({dataset.panel.n_samples} samples x "
        f"{dataset.panel.n_subcarriers} subcarriers) and {manifest_path}"
    )


def cmd_ingest(cfg: RunConfig) -> None:
    panel = read_panel_csv(cfg.input_path)
    manifest = {
        "format": "plcdiag-dataset",
        "format_version": MANIFEST_VERSION,
        "n_samples": panel.n_samples,
        "n_subcarriers": panel.n_subcarriers,
        "period_s": panel.period_s,
        "anomaly_intervals": [],
        "source": str(cfg.input_path),
    }
    dataset = Dataset(
        panel=panel,
        mask=np.zeros(panel.n_samples, dtype=bool),
        manifest=manifest,
    )
    base = cfg.resolve_output("ingested")
    csv_path, manifest_path = write_dataset(base, dataset)
    print(
        f"ingested {cfg.input_path} -> {csv_path} ({panel.n_samples} samples x "
        f"{panel.n_subcarriers} subcarriers) and {manifest_path}"
    )


def cmd_train(cfg: RunConfig) -> None:
    dataset = read_dataset(cfg.input_path)
    batches = batch_average(dataset.panel, cfg.n_batches)
    log.info(
        "fitting %s on %d batches of %d samples",
        cfg.predictor_kind, cfg.n_batches, dataset.panel.n_samples,
    )
    pipe = build_pipeline(
        batches,
        cfg.predictor_kind,
        dict(cfg.predictor_hyperparams),
        n_batches=cfg.n_batches,
        window=cfg.window,
        train_fraction=cfg.train_fraction,
        ridge=cfg.ridge,
    )
    out = cfg.resolve_output("models")
    out.mkdir(parents=True, exist_ok=True)
    model_paths = []
    for index, model in enumerate(pipe.predictors):
        model_paths.append(
            save_model(model, out / MODEL_FILE_PATTERN.format(index=index))
        )
    stats_doc = {
        "format": STATS_FORMAT,
        "version": STATS_VERSION,
        "kind": cfg.predictor_kind,
        "n_batches": pipe.n_batches,
        "n_subcarriers": dataset.panel.n_subcarriers,
        "window": pipe.window,
        "n_tr": pipe.n_tr,
        "stats": pipe.stats.to_dict(),
        "train_smds": pipe.train_smds.tolist(),
    }
    _write_json(out / STATS_FILE_NAME, stats_doc)
    per_batch = batch_rmse_report(pipe.predictors, batches.values, pipe.n_tr)
    report = {
        "kind": cfg.predictor_kind,
        "n_batches": pipe.n_batches,
        "n_samples": dataset.panel.n_samples,
        "n_tr": pipe.n_tr,
        "window": pipe.window,
        "per_batch": per_batch,
        "train_smd_mean": float(np.mean(pipe.train_smds)),
    }
    _write_json(out / REPORT_FILE_NAME, report)
    rmses = [entry["rmse"] for entry in per_batch if entry["rmse"] is not None]
    mean_rmse = float(np.mean(rmses)) if rmses else float("nan")
    print(
        f"trained {pipe.n_batches} {cfg.predictor_kind} models -> {out} "
        f"(mean held-out normalized RMSE {mean_rmse:.4f})"
    )


def _load_trained(models_dir: Path) -> tuple[BatchPipeline, dict]:
    stats_path = models_dir / STATS_FILE_NAME
    if not stats_path.exists():
        raise ModelIOError(f"stats file not found: {stats_path}")
    try:
        stats_doc = json.loads(stats_path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelIOError(f"stats file {stats_path} is not valid JSON: {exc}") from exc
    if not isinstance(stats_doc, dict) or stats_doc.get("format") != STATS_FORMAT:
        raise ModelIOError(f"{stats_path} is not a {STATS_FORMAT} file")
    if stats_doc.get("version") != STATS_VERSION:
        raise ModelIOError(
            f"{stats_path} has version {stats_doc.get('version')!r}, "
            f"expected {STATS_VERSION}"
        )

    found = []
    for path in models_dir.glob("model_batch_*.json"):
        try:
            index = int(path.stem.rsplit("_", 1)[1])
        except ValueError:
            continue
        found.append((index, path))
    if not found:
        raise ModelIOError(f"no model_batch_*.json files in {models_dir}")
    found.sort()
    indices = [index for index, _ in found]
    if indices != list(range(len(found))):
        raise ModelIOError(
            f"model files in {models_dir} are not a contiguous batch range: "
            f"{indices}"
        )
    predictors = [load_model(path) for _, path in found]

    try:
        stats = ErrorStats.from_dict(stats_doc["stats"])
        window = int(stats_doc["window"])
        n_tr = int(stats_doc["n_tr"])
        train_smds = np.asarray(stats_doc["train_smds"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelIOError(f"corrupt stats file {stats_path}: {exc}") from exc
    if stats.dim != len(predictors):
        raise DataError(
            f"batch configuration mismatch: {len(predictors)} model files but "
            f"error statistics of dimension {stats.dim}"
        )
    pipe = BatchPipeline(
        predictors=predictors,
        stats=stats,
        train_smds=train_smds,
        window=window,
        n_tr=n_tr,
    )
    return pipe, stats_doc


def cmd_detect(cfg: RunConfig) -> None:
    pipe, stats_doc = _load_trained(cfg.models_path)
    dataset = read_dataset(cfg.input_path)
    expected_sc = stats_doc.get("n_subcarriers")
    if expected_sc is not None and dataset.panel.n_subcarriers != expected_sc:
        raise DataError(
            f"batch configuration mismatch: models were trained on "
            f"{expected_sc} subcarriers, dataset has "
            f"{dataset.panel.n_subcarriers}"
        )
    batches = batch_average(dataset.panel, pipe.n_batches)

    if cfg.threshold_mode == "theoretical":
        threshold = threshold_theoretical(cfg.p_fa, pipe.n_batches)
    else:
        threshold = threshold_empirical(
            pipe.train_smds, cfg.p_fa, pipe.n_tr, pipe.window
        )

    start = cfg.detect_start if cfg.detect_start is not None else pipe.window
    n = dataset.panel.n_samples
    if not pipe.window <= start < n:
        raise ConfigError(
            f"detector.start must lie in [{pipe.window}, {n}), got {start}"
        )
    log.info("scoring samples [%d, %d) against threshold %.4f", start, n, threshold)
    scores = pipe.smd_series(batches, start)
    report = DetectionReport(
        smd=scores,
        threshold=threshold,
        alarms=scores > threshold,
        p_fa_target=cfg.p_fa,
        threshold_mode=cfg.threshold_mode,
    )
    base = cfg.resolve_output("detection")
    csv_path = report.write_csv(Path(str(base) + ".csv"))
    summary = report.summary()
    summary["start_index"] = start
    first = report.first_alarm_index
    summary["first_alarm_absolute"] = None if first is None else start + first
    sustained = first_sustained_alarm(report.alarms, cfg.consecutive)
    summary["first_sustained_alarm_absolute"] = (
        None if sustained is None else start + sustained
    )
    summary["input"] = str(cfg.input_path)
    summary["models"] = str(cfg.models_path)
    json_path = _write_json(Path(str(base) + ".json"), summary)
    print(
        f"scored {report.n_samples} samples: {report.alarm_count} alarms "
        f"({summary['alarm_fraction']:.4%}) at threshold {threshold:.2f} "
        f"-> {csv_path}, {json_path}"
    )


def cmd_roc(cfg: RunConfig) -> None:
    spec = _experiment_spec(cfg)
    out_dir = cfg.resolve_output(".")
    curves = run_roc(spec, scoring=cfg.scoring, out_dir=out_dir)
    for kind in sorted(curves):
        curve = curves[kind]
        print(
            f"roc {kind}: auc={curve.auc:.4f} over {curve.trial_count} trials "
            f"({len(curve.points)} points)"
        )


def cmd_benchmark(cfg: RunConfig) -> None:
    spec = _experiment_spec(cfg)
    out_dir = cfg.resolve_output(".")
    records = run_predictor_benchmark(spec, out_dir=out_dir)
    summary = benchmark_summary(records)
    _write_json(
        Path(out_dir) / f"benchmark_summary_{spec.seed_base}.json", summary
    )
    for kind in sorted(summary):
        cell = summary[kind]
        mean = cell["mean_rmse"]
        shown = "n/a" if mean is None else f"{mean:.4f}"
        print(
            f"benchmark {kind}: mean normalized RMSE {shown} "
            f"({cell['n_trials']} trials, {cell['n_failed']} failed)"
        )


def cmd_transfer(cfg: RunConfig) -> None:
    if cfg.input_path is not None:
        source = read_dataset(cfg.input_path)
    else:
        source = generate_dataset(_effective_scenario(cfg))
    if cfg.transfer_target_input is not None:
        target = read_dataset(cfg.transfer_target_input)
    else:
        target = generate_dataset(cfg.transfer_target_scenario)

    result = run_transfer(
        source,
        target,
        cfg.predictor_kind,
        dict(cfg.predictor_hyperparams),
        window=cfg.window,
        n_batches=cfg.n_batches,
        train_fraction=cfg.train_fraction,
        p_fa=cfg.p_fa,
        threshold_mode=cfg.threshold_mode,
        start=cfg.detect_start,
    )
    seed = cfg.seed if cfg.seed is not None else 0
    base = cfg.resolve_output(f"transfer_{cfg.predictor_kind}_{seed}")
    csv_path = result.report.write_csv(Path(str(base) + ".csv"))
    summary = result.report.summary()
    summary["start_index"] = result.start_index
    summary["first_alarm_absolute"] = result.first_alarm_absolute
    json_path = _write_json(Path(str(base) + ".json"), summary)
    print(
        f"transfer {cfg.predictor_kind}: {result.report.alarm_count} alarms over "
        f"{result.report.n_samples} samples "
        f"({summary['alarm_fraction']:.4%}), first at "
        f"{summary['first_alarm_absolute']} -> {csv_path}, {json_path}"
    )


def cmd_incipient(cfg: RunConfig) -> None:
    spec = _experiment_spec(cfg)
    out_dir = cfg.resolve_output(".")
    results = run_incipient(
        spec,
        consecutive=cfg.consecutive,
        n_permutations=cfg.n_permutations,
        out_dir=out_dir,
    )
    summaries = {}
    for kind, trials in sorted(results.items()):
        summaries[kind] = {}
        for p_fa in spec.p_fa_grid:
            cell = incipient_summary(trials, p_fa)
            summaries[kind][repr(p_fa)] = cell
            delay = cell["median_delay_days"]
            shown = "n/a" if delay is None else f"{delay:.2f}"
            print(
                f"incipient {kind} @ p_fa={p_fa:g}: {cell['n_detected']}/"
                f"{cell['n_trials']} detected, median delay {shown} days, "
                f"median trend slope {cell['median_slope']:.3g} "
                f"(median p={cell['median_p_value']:.3g})"
            )
    _write_json(
        Path(out_dir) / f"incipient_summary_{spec.seed_base}.json", summaries
    )


COMMAND_HANDLERS = {
    "generate": cmd_generate,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "detect": cmd_detect,
    "roc": cmd_roc,
    "benchmark": cmd_benchmark,
    "transfer": cmd_transfer,
    "incipient": cmd_incipient,
}

COMMAND_HELP = {
    "generate": "synthesize an SNR dataset from a scenario config or manifest",
    "ingest": "normalize an external SNR CSV into the dataset layout",
    "train": "fit one predictor per batch plus error statistics",
    "detect": "score a dataset against trained models and emit alarms",
    "roc": "detection ROC curves over seeded trials",
    "benchmark": "healthy-data forecasting accuracy per predictor kind",
    "transfer": "train on one network, detect on another",
    "incipient": "growing-fault trend and first-alarm latency",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plcdiag",
        description="Cable-health monitoring from modem SNR traces: synthetic "
        "data generation, per-batch forecasting, and anomaly detection.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=COMMAND_HELP[name])
        sub.add_argument(
            "--config", required=True, help="path to the JSON run config"
        )
        sub.add_argument(
            "--seed", type=int, default=None, help="override the config seed"
        )
        sub.add_argument(
            "--out",
            default=None,
            help=f"output directory (default: ${OUT_DIR_ENV} or the working "
            f"directory)",
        )
        sub.add_argument(
            "--verbose", action="store_true", help="log progress to stderr"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(
            args.config,
            command=args.command,
            seed_override=args.seed,
            out_override=args.out,
        )
        validate_inputs(cfg)
        COMMAND_HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
