"""Run configuration for the command-line interface.

A run config is a JSON or YAML document with a ``command`` plus the sections
that command needs.  Parsing is strict: unknown keys anywhere abort with the
dotted path of the offender, before any file is touched.  All numerical
parameters live in the config; command-line flags only override the config
path, the seed, the output directory, and verbosity.

Sections
--------
``paths``       input/output/models locations
``scenario``    emulated network and measurement campaign (see the emulator
                module for the full key set)
``predictor``   forecaster kind and hyperparameters for train/detect/transfer
``pipeline``    batch count, window, train fraction, covariance ridge
``detector``    false-alarm target, threshold mode, scoring start
``experiment``  predictor grid, trial count, seed base, p_fa grid, scoring
``transfer``    target network: a second scenario or a second dataset path
``incipient``   alarm debounce length and permutation count

A dataset manifest written by ``generate`` is itself a valid config for the
``generate`` command, which is how an archived run is reproduced.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .detector import THRESHOLD_MODES
from .emulator import Scenario, scenario_from_dict
from .errors import ConfigError
from .evaluation import SCORING_MODES
from .forecasting import PREDICTOR_REGISTRY
from .pipeline import DEFAULT_N_BATCHES
from .timeseries import SAMPLES_PER_DAY

COMMANDS = (
    "generate",
    "ingest",
    "train",
    "detect",
    "roc",
    "benchmark",
    "transfer",
    "incipient",
)

OUT_DIR_ENV = "PLCDIAG_OUT_DIR"

DATASET_MANIFEST_FORMAT = "plcdiag-dataset"


@dataclass(frozen=True)
class RunConfig:
    """Fully parsed and validated run configuration."""

    command: str
    out_dir: Path
    scenario: Scenario | None = None
    input_path: Path | None = None
    output: str | None = None
    models_path: Path | None = None
    seed: int | None = None
    predictor_kind: str = "arima"
    predictor_hyperparams: dict = field(default_factory=dict)
    window: int = SAMPLES_PER_DAY
    n_batches: int = DEFAULT_N_BATCHES
    train_fraction: float = 0.8
    ridge: float | None = None
    p_fa: float = 0.01
    threshold_mode: str = "theoretical"
    detect_start: int | None = None
    experiment_predictors: dict | None = None
    n_trials: int = 20
    seed_base: int = 0
    p_fa_grid: tuple = (0.01,)
    scoring: str = "trial"
    transfer_target_scenario: Scenario | None = None
    transfer_target_input: Path | None = None
    consecutive: int = 3
    n_permutations: int = 199

    def resolve_output(self, default_name: str) -> Path:
        """Output location: ``paths.output`` if set, else ``default_name``,
        joined onto the output directory unless already absolute."""
        target = Path(self.output) if self.output else Path(default_name)
        if not target.is_absolute():
            target = self.out_dir / target
        return target


def _section(data, allowed, where) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return dict(data)


def _coerce(section, key, convert, where, default=None):
    if key not in section or section[key] is None:
        return default
    try:
        return convert(section[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: {exc}") from exc


def _require_str(section, key, where, default=None):
    value = section.get(key, default)
    if value is None:
        return None
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{where}.{key} must be a non-empty string")
    return value


def load_config(
    path,
    command: str,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    """Read, parse, and validate the config at ``path``.

    ``.yaml``/``.yml`` files are parsed as YAML, everything else as JSON;
    syntax errors are reported with line and column.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix in (".yaml", ".yml"):
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            position = (
                f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
            )
            raise ConfigError(f"{path} is not valid YAML{position}: {exc}") from exc
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path} is not valid JSON (line {exc.lineno}, column {exc.colno}): "
                f"{exc.msg}"
            ) from exc
    return parse_config(
        doc,
        command=command,
        seed_override=seed_override,
        out_override=out_override,
        where=str(path),
    )


def parse_config(
    doc,
    command: str,
    seed_override: int | None = None,
    out_override: str | None = None,
    where: str = "config",
) -> RunConfig:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {COMMANDS}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must hold a JSON object")

    out_dir = Path(out_override or os.environ.get(OUT_DIR_ENV) or ".")

    if doc.get("format") == DATASET_MANIFEST_FORMAT:
        # A generated dataset's manifest replays the exact generation run.
        if command != "generate":
            raise ConfigError(
                f"{where}: a dataset manifest can only drive the generate "
                f"command, not {command!r}"
            )
        if "scenario" not in doc:
            raise ConfigError(f"{where}: manifest lacks a scenario section")
        scenario = scenario_from_dict(doc["scenario"], where=f"{where}.scenario")
        seed = _coerce(doc, "seed", int, where)
        if seed_override is not None:
            seed = int(seed_override)
        return RunConfig(
            command=command, out_dir=out_dir, scenario=scenario, seed=seed
        )

    top = _section(
        doc,
        [
            "command",
            "paths",
            "scenario",
            "predictor",
            "pipeline",
            "detector",
            "experiment",
            "transfer",
            "incipient",
            "seed",
        ],
        where,
    )

    cfg_command = top.get("command")
    if cfg_command is not None:
        if cfg_command not in COMMANDS:
            raise ConfigError(
                f"{where}.command must be one of {COMMANDS}, got {cfg_command!r}"
            )
        if cfg_command != command:
            raise ConfigError(
                f"{where}.command is {cfg_command!r} but the {command!r} "
                f"subcommand was invoked"
            )

    paths = _section(top.get("paths"), ["input", "output", "models"], f"{where}.paths")
    input_path = _require_str(paths, "input", f"{where}.paths")
    output = _require_str(paths, "output", f"{where}.paths")
    models = _require_str(paths, "models", f"{where}.paths")

    scenario = None
    if "scenario" in top:
        scenario = scenario_from_dict(top["scenario"], where=f"{where}.scenario")

    pred = _section(
        top.get("predictor"), ["kind", "hyperparams"], f"{where}.predictor"
    )
    kind = pred.get("kind", "arima")
    if kind not in PREDICTOR_REGISTRY:
        known = ", ".join(sorted(PREDICTOR_REGISTRY))
        raise ConfigError(
            f"{where}.predictor.kind: unknown predictor {kind!r} (known: {known})"
        )
    hyper = pred.get("hyperparams") or {}
    if not isinstance(hyper, dict):
        raise ConfigError(f"{where}.predictor.hyperparams must be a mapping")

    pipe = _section(
        top.get("pipeline"),
        ["window", "n_batches", "train_fraction", "ridge"],
        f"{where}.pipeline",
    )
    window = _coerce(pipe, "window", int, f"{where}.pipeline", SAMPLES_PER_DAY)
    n_batches = _coerce(pipe, "n_batches", int, f"{where}.pipeline", DEFAULT_N_BATCHES)
    train_fraction = _coerce(pipe, "train_fraction", float, f"{where}.pipeline", 0.8)
    ridge = _coerce(pipe, "ridge", float, f"{where}.pipeline")
    if window < 1:
        raise ConfigError(f"{where}.pipeline.window must be >= 1, got {window}")
    if n_batches < 1:
        raise ConfigError(f"{where}.pipeline.n_batches must be >= 1, got {n_batches}")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(
            f"{where}.pipeline.train_fraction must lie in (0, 1), got {train_fraction}"
        )
    if ridge is not None and ridge < 0:
        raise ConfigError(f"{where}.pipeline.ridge must be >= 0, got {ridge}")

    det = _section(
        top.get("detector"), ["p_fa", "threshold_mode", "start"], f"{where}.detector"
    )
    p_fa = _coerce(det, "p_fa", float, f"{where}.detector", 0.01)
    if not 0.0 < p_fa < 1.0:
        raise ConfigError(f"{where}.detector.p_fa must lie in (0, 1), got {p_fa}")
    threshold_mode = det.get("threshold_mode", "theoretical")
    if threshold_mode not in THRESHOLD_MODES:
        raise ConfigError(
            f"{where}.detector.threshold_mode must be one of {THRESHOLD_MODES}, "
            f"got {threshold_mode!r}"
        )
    detect_start = _coerce(det, "start", int, f"{where}.detector")
    if detect_start is not None and detect_start < 1:
        raise ConfigError(
            f"{where}.detector.start must be >= 1, got {detect_start}"
        )

    exp = _section(
        top.get("experiment"),
        ["predictors", "n_trials", "seed_base", "p_fa_grid", "scoring"],
        f"{where}.experiment",
    )
    predictors = exp.get("predictors")
    if predictors is not None:
        if not isinstance(predictors, dict) or not predictors:
            raise ConfigError(
                f"{where}.experiment.predictors must be a non-empty mapping "
                f"of kind -> hyperparams"
            )
        for exp_kind, exp_hyper in predictors.items():
            if exp_kind not in PREDICTOR_REGISTRY:
                known = ", ".join(sorted(PREDICTOR_REGISTRY))
                raise ConfigError(
                    f"{where}.experiment.predictors: unknown predictor "
                    f"{exp_kind!r} (known: {known})"
                )
            if exp_hyper is not None and not isinstance(exp_hyper, dict):
                raise ConfigError(
                    f"{where}.experiment.predictors.{exp_kind} must be a mapping"
                )
        predictors = {k: dict(v or {}) for k, v in predictors.items()}
    n_trials = _coerce(exp, "n_trials", int, f"{where}.experiment", 20)
    seed_base = _coerce(exp, "seed_base", int, f"{where}.experiment", 0)
    grid = exp.get("p_fa_grid", (0.01,))
    try:
        p_fa_grid = tuple(float(p) for p in grid)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.experiment.p_fa_grid: {exc}") from exc
    scoring = exp.get("scoring", "trial")
    if scoring not in SCORING_MODES:
        raise ConfigError(
            f"{where}.experiment.scoring must be one of {SCORING_MODES}, "
            f"got {scoring!r}"
        )

    trans = _section(
        top.get("transfer"),
        ["target_scenario", "target_input"],
        f"{where}.transfer",
    )
    target_scenario = None
    if "target_scenario" in trans:
        target_scenario = scenario_from_dict(
            trans["target_scenario"], where=f"{where}.transfer.target_scenario"
        )
    target_input = _require_str(trans, "target_input", f"{where}.transfer")
    if target_scenario is not None and target_input is not None:
        raise ConfigError(
            f"{where}.transfer: give target_scenario or target_input, not both"
        )

    inc = _section(
        top.get("incipient"), ["consecutive", "n_permutations"], f"{where}.incipient"
    )
    consecutive = _coerce(inc, "consecutive", int, f"{where}.incipient", 3)
    n_permutations = _coerce(inc, "n_permutations", int, f"{where}.incipient", 199)
    if consecutive < 1:
        raise ConfigError(
            f"{where}.incipient.consecutive must be >= 1, got {consecutive}"
        )
    if n_permutations < 1:
        raise ConfigError(
            f"{where}.incipient.n_permutations must be >= 1, got {n_permutations}"
        )

    seed = _coerce(top, "seed", int, where)
    if seed_override is not None:
        seed = int(seed_override)

    return RunConfig(
        command=command,
        out_dir=out_dir,
        scenario=scenario,
        input_path=Path(input_path) if input_path else None,
        output=output,
        models_path=Path(models) if models else None,
        seed=seed,
        predictor_kind=kind,
        predictor_hyperparams=dict(hyper),
        window=window,
        n_batches=n_batches,
        train_fraction=train_fraction,
        ridge=ridge,
        p_fa=p_fa,
        threshold_mode=threshold_mode,
        detect_start=detect_start,
        experiment_predictors=predictors,
        n_trials=n_trials,
        seed_base=seed_base,
        p_fa_grid=p_fa_grid,
        scoring=scoring,
        transfer_target_scenario=target_scenario,
        transfer_target_input=Path(target_input) if target_input else None,
        consecutive=consecutive,
        n_permutations=n_permutations,
    )


def validate_inputs(cfg: RunConfig) -> None:
    """Check that the command's required sections and input files are present
    before anything is executed or written."""
    need_scenario = {"generate", "roc", "benchmark", "incipient"}
    if cfg.command in need_scenario and cfg.scenario is None:
        raise ConfigError(f"the {cfg.command} command requires a scenario section")
    if cfg.command == "ingest":
        if cfg.input_path is None:
            raise ConfigError("the ingest command requires paths.input")
        if not cfg.input_path.exists():
            raise ConfigError(f"paths.input does not exist: {cfg.input_path}")
    if cfg.command in ("train", "detect"):
        if cfg.input_path is None:
            raise ConfigError(f"the {cfg.command} command requires paths.input")
        _require_dataset(cfg.input_path)
    if cfg.command == "detect":
        if cfg.models_path is None:
            raise ConfigError("the detect command requires paths.models")
        if not cfg.models_path.is_dir():
            raise ConfigError(
                f"paths.models is not a directory: {cfg.models_path}"
            )
    if cfg.command == "transfer":
        if (cfg.scenario is None) == (cfg.input_path is None):
            raise ConfigError(
                "the transfer command requires exactly one training source: "
                "a scenario section or paths.input"
            )
        if cfg.input_path is not None:
            _require_dataset(cfg.input_path)
        if (cfg.transfer_target_scenario is None) and (
            cfg.transfer_target_input is None
        ):
            raise ConfigError(
                "the transfer command requires transfer.target_scenario "
                "or transfer.target_input"
            )
        if cfg.transfer_target_input is not None:
            _require_dataset(cfg.transfer_target_input)


def _require_dataset(base: Path) -> None:
    from .emulator import dataset_paths

    csv_path, _ = dataset_paths(base)
    if not csv_path.exists():
        raise ConfigError(f"dataset not found: {csv_path}")
