"""Scenario configuration, SNR panel synthesis, and dataset generation/IO.

A Scenario bundles everything needed to produce one dataset: cable, band,
topology, load model parameters, fault schedule, duration, and seed. The
generator derives independent substreams for loads and noise from the single
scenario seed, so datasets are reproducible bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import _accel
from ..errors import ConfigError, DataError
from ..loads import CyclicProfile, ShockParams, gen_load_sequence
from ..timeseries import SAMPLES_PER_DAY, SnrPanel, read_panel_csv, write_panel_csv
from . import network
from .cable import MATCHED, BandSpec, CableSpec, FaultSpec, TopologySpec

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    cable: CableSpec = CableSpec()
    topology: TopologySpec = TopologySpec()
    band: BandSpec = BandSpec()
    fault: FaultSpec = FaultSpec()
    n_samples: int = SAMPLES_PER_DAY
    seed: int = 0
    shocks: ShockParams = ShockParams()
    profile: CyclicProfile = CyclicProfile()

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.fault.kind != "none" and self.fault.onset_index >= self.n_samples:
            raise ConfigError(
                f"fault onset {self.fault.onset_index} is beyond the last sample "
                f"({self.n_samples - 1})"
            )


def days_to_samples(days: float) -> int:
    return int(round(days * SAMPLES_PER_DAY))


@dataclass
class Dataset:
    """Generated panel plus ground-truth anomaly mask and provenance manifest."""

    panel: SnrPanel
    mask: np.ndarray
    manifest: dict


def _derived_seeds(seed: int, n_children: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n_children)
    return [int(c.generate_state(1)[0]) for c in children]


@lru_cache(maxsize=512)
def _element_matrix(cable: CableSpec, band_key, element):
    start_hz, spacing_hz, n_subcarriers = band_key
    freqs = start_hz + spacing_hz * np.arange(n_subcarriers)
    matrix = network.element_abcd(cable, freqs, element)
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=64)
def _chain_pair(cable: CableSpec, topology: TopologySpec, band_key, view):
    # A ramping fault yields a distinct view every sample, but all views share
    # their unscaled pieces, so the chains are composed from per-element
    # cached matrices instead of being rebuilt whole.
    pre, post = network.trunk_elements(topology, view)
    pair = []
    for elements in (pre, post):
        result = network.identity_abcd(band_key[2])
        for element in elements:
            result = network.compose_abcd(result, _element_matrix(cable, band_key, element))
        result.setflags(write=False)
        pair.append(result)
    return pair[0], pair[1]


def _switch_weights(fault: FaultSpec, n: int) -> np.ndarray:
    j = np.arange(n)
    ramp = (j - fault.onset_index + 1) / fault.switch_duration_samples
    return np.clip(ramp, 0.0, 1.0)


def branch_loads(scenario: Scenario, seed: int) -> np.ndarray:
    """Per-sample branch termination, including any termination-change crossfade."""
    load_seed, alt_seed, _ = _derived_seeds(seed, 3)
    loads = gen_load_sequence(
        scenario.topology.branch_load_model,
        scenario.n_samples,
        load_seed,
        scenario.shocks,
        scenario.profile,
    )
    if scenario.fault.kind == "termination_change":
        alt = gen_load_sequence(
            scenario.fault.switch_to_model,
            scenario.n_samples,
            alt_seed,
            scenario.shocks,
            scenario.profile,
        )
        w = _switch_weights(scenario.fault, scenario.n_samples)
        loads = (1.0 - w) * loads + w * alt
    return loads


def anomaly_mask(fault: FaultSpec, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    if fault.kind != "none":
        mask[fault.onset_index:] = True
    return mask


def _attenuation_chunk(scenario: Scenario, start: int, stop: int, loads, freqs, out):
    fault = scenario.fault
    views = [fault.view_at(j) for j in range(start, stop)]
    index_of: dict = {}
    state_idx = np.empty(stop - start, dtype=np.int64)
    uniq = []
    for k, view in enumerate(views):
        slot = index_of.get(view)
        if slot is None:
            slot = len(uniq)
            index_of[view] = slot
            uniq.append(view)
        state_idx[k] = slot
    band_key = (scenario.band.start_hz, scenario.band.spacing_hz, scenario.band.n_subcarriers)
    pairs = [_chain_pair(scenario.cable, scenario.topology, band_key, v) for v in uniq]
    a_pre = np.stack([p[0] for p in pairs])
    a_post = np.stack([p[1] for p in pairs])
    network.attenuation_db(
        scenario.cable,
        scenario.topology,
        freqs,
        a_pre,
        a_post,
        state_idx,
        loads[start:stop],
        out,
    )


def generate_dataset(scenario: Scenario, seed: int | None = None) -> Dataset:
    """Synthesize the SNR panel for a scenario, one row per 15-minute sample."""
    n = scenario.n_samples
    band = scenario.band
    n_freq = band.n_subcarriers
    seed = scenario.seed if seed is None else int(seed)
    _, _, noise_seed = _derived_seeds(seed, 3)
    loads = branch_loads(scenario, seed)
    freqs = band.frequencies()

    rng = np.random.default_rng(noise_seed)
    panel = rng.standard_normal((n, n_freq))
    panel *= -np.sqrt(band.perturbation_var_db2)
    panel += (band.tx_psd_dbm_per_hz - band.noise_psd_dbm(freqs))[None, :]

    # Incipient faults change the line state every sample, so keep the stacked
    # per-state matrices small; abrupt faults reuse one or two cached states.
    if scenario.fault.kind == "incipient":
        chunk = 512
    else:
        chunk = 4096 if _accel.NUMBA_ENABLED else 1024
    att = np.empty((min(chunk, n), n_freq))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        _attenuation_chunk(scenario, start, stop, loads, freqs, att[: stop - start])
        panel[start:stop] += att[: stop - start]

    manifest = {
        "format": "plcdiag-dataset",
        "format_version": MANIFEST_VERSION,
        "seed": seed,
        "n_samples": n,
        "n_subcarriers": n_freq,
        "period_s": 900.0,
        "anomaly_intervals": [[int(scenario.fault.onset_index), int(n)]]
        if scenario.fault.kind != "none"
        else [],
        "scenario": scenario_to_dict(scenario),
    }
    return Dataset(panel=SnrPanel(panel), mask=anomaly_mask(scenario.fault, n), manifest=manifest)


def snr_panel(cfr_series: np.ndarray, band: BandSpec, rng_seed: int) -> SnrPanel:
    """SNR rows from per-sample complex CFRs: tx PSD + channel gain - noise
    PSD - white dB perturbation."""
    cfr_series = np.atleast_2d(np.asarray(cfr_series, dtype=np.complex128))
    if cfr_series.shape[1] != band.n_subcarriers:
        raise DataError(
            f"CFR series has {cfr_series.shape[1]} subcarriers, band expects "
            f"{band.n_subcarriers}"
        )
    freqs = band.frequencies()
    att = 20.0 * np.log10(np.abs(cfr_series))
    rng = np.random.default_rng(rng_seed)
    pert = rng.standard_normal(cfr_series.shape) * np.sqrt(band.perturbation_var_db2)
    values = band.tx_psd_dbm_per_hz + att - band.noise_psd_dbm(freqs)[None, :] - pert
    return SnrPanel(values)


# ---------------------------------------------------------------------------
# Scenario (de)serialization shared by dataset manifests and the CLI config.


def _impedance_to_json(value):
    if value == MATCHED:
        return MATCHED
    value = complex(value)
    return [value.real, value.imag]


def _impedance_from_json(value, where):
    if value == MATCHED:
        return MATCHED
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ConfigError(f"{where}: impedance must be a number, [re, im], or '{MATCHED}'")


def scenario_to_dict(scenario: Scenario) -> dict:
    topo = asdict(scenario.topology)
    topo["tx_impedance_ohm"] = _impedance_to_json(scenario.topology.tx_impedance_ohm)
    topo["rx_impedance_ohm"] = _impedance_to_json(scenario.topology.rx_impedance_ohm)
    profile = {
        "fundamental_period": scenario.profile.fundamental_period,
        "harmonics": [list(h) for h in scenario.profile.harmonics],
        "offset_ohm": scenario.profile.offset_ohm,
    }
    return {
        "cable": asdict(scenario.cable),
        "topology": topo,
        "band": asdict(scenario.band),
        "fault": asdict(scenario.fault),
        "shocks": asdict(scenario.shocks),
        "profile": profile,
        "n_samples": scenario.n_samples,
        "seed": scenario.seed,
    }


def _strict_section(data, allowed, where) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return dict(data)


def scenario_from_dict(data: dict, where: str = "scenario") -> Scenario:
    top = _strict_section(
        data,
        ["cable", "topology", "band", "fault", "shocks", "profile",
         "n_samples", "duration_days", "seed"],
        where,
    )
    if "n_samples" in top and "duration_days" in top:
        raise ConfigError(f"{where}: give n_samples or duration_days, not both")

    cable_kw = _strict_section(
        top.get("cable"),
        ["resistance_ohm_per_m", "reference_hz", "inductance_h_per_m",
         "capacitance_f_per_m", "loss_tangent"],
        f"{where}.cable",
    )
    topo_kw = _strict_section(
        top.get("topology"),
        ["trunk_tx_to_tee_m", "tee_to_rx_m", "branch_m", "branch_load_model",
         "tx_impedance_ohm", "rx_impedance_ohm"],
        f"{where}.topology",
    )
    for key in ("tx_impedance_ohm", "rx_impedance_ohm"):
        if key in topo_kw:
            topo_kw[key] = _impedance_from_json(topo_kw[key], f"{where}.topology.{key}")
    band_kw = _strict_section(
        top.get("band"),
        ["n_subcarriers", "spacing_hz", "start_hz", "tx_psd_dbm_per_hz",
         "noise_floor_dbm_per_hz", "noise_slope_db_per_mhz", "perturbation_var_db2"],
        f"{where}.band",
    )
    fault_kw = _strict_section(
        top.get("fault"),
        ["kind", "onset_index", "onset_day", "location_m", "extent_m",
         "fault_resistance_ohm", "severity_fraction", "ramp_end_index",
         "ramp_end_day", "peak_scale", "switch_duration_samples", "switch_to_model"],
        f"{where}.fault",
    )
    for day_key, idx_key in (("onset_day", "onset_index"), ("ramp_end_day", "ramp_end_index")):
        if day_key in fault_kw:
            if idx_key in fault_kw:
                raise ConfigError(f"{where}.fault: give {day_key} or {idx_key}, not both")
            fault_kw[idx_key] = days_to_samples(float(fault_kw.pop(day_key)))
    shocks_kw = _strict_section(
        top.get("shocks"),
        ["real_low", "real_high", "imag_low", "imag_high", "seed"],
        f"{where}.shocks",
    )
    profile_kw = _strict_section(
        top.get("profile"),
        ["fundamental_period", "harmonics", "offset_ohm"],
        f"{where}.profile",
    )
    if "harmonics" in profile_kw:
        try:
            profile_kw["harmonics"] = tuple(
                (int(o), float(s), float(c)) for o, s, c in profile_kw["harmonics"]
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"{where}.profile.harmonics must be [order, sine_amp, cosine_amp] triples"
            ) from exc

    n_samples = top.get("n_samples")
    if "duration_days" in top:
        n_samples = days_to_samples(float(top["duration_days"]))
    kwargs = {}
    if n_samples is not None:
        kwargs["n_samples"] = int(n_samples)
    if "seed" in top:
        kwargs["seed"] = int(top["seed"])
    try:
        return Scenario(
            cable=CableSpec(**cable_kw),
            topology=TopologySpec(**topo_kw),
            band=BandSpec(**band_kw),
            fault=FaultSpec(**fault_kw),
            shocks=ShockParams(**shocks_kw),
            profile=CyclicProfile(**profile_kw),
            **kwargs,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


# ---------------------------------------------------------------------------
# Dataset files: <base>.csv plus <base>.manifest.json


def dataset_paths(base) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix == ".csv":
        base = base.with_suffix("")
    return base.with_suffix(".csv"), Path(str(base) + ".manifest.json")


def write_dataset(base, dataset: Dataset) -> tuple[Path, Path]:
    csv_path, manifest_path = dataset_paths(base)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_panel_csv(csv_path, dataset.panel)
    manifest_path.write_text(json.dumps(dataset.manifest, sort_keys=True, indent=2) + "\n")
    return csv_path, manifest_path


def read_dataset(base) -> Dataset:
    """Load a dataset written by write_dataset; a missing manifest yields an
    all-healthy mask (ingested field data)."""
    csv_path, manifest_path = dataset_paths(base)
    if not csv_path.exists():
        raise DataError(f"dataset CSV not found: {csv_path}")
    panel = read_panel_csv(csv_path)
    manifest: dict = {}
    if manifest_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"corrupt manifest {manifest_path}: {exc}") from exc
    mask = np.zeros(panel.n_samples, dtype=bool)
    for interval in manifest.get("anomaly_intervals", []):
        lo, hi = int(interval[0]), int(interval[1])
        mask[lo:hi] = True
    return Dataset(panel=panel, mask=mask, manifest=manifest)
