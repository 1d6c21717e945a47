"""Cable, band, topology, and fault descriptions.

All types are frozen dataclasses so resolved per-sample fault views can key
caches of precomputed trunk matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..errors import ConfigError
from ..loads import LOAD_MODELS


@dataclass(frozen=True)
class CableSpec:
    """Two-conductor equivalent line constants.

    Series resistance follows a skin-effect law R(f) = R0 * sqrt(f/f0);
    insulation conductance is G(f) = 2*pi*f*C*tan_delta.
    """

    resistance_ohm_per_m: float = 0.01
    reference_hz: float = 1e6
    inductance_h_per_m: float = 4e-7
    capacitance_f_per_m: float = 3e-10
    loss_tangent: float = 4e-4

    def __post_init__(self):
        for name in (
            "resistance_ohm_per_m",
            "reference_hz",
            "inductance_h_per_m",
            "capacitance_f_per_m",
            "loss_tangent",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"CableSpec.{name} must be strictly positive")

    def series_impedance(self, freq_hz, rg_scale: float = 1.0) -> np.ndarray:
        freq_hz = np.asarray(freq_hz, dtype=np.float64)
        r = self.resistance_ohm_per_m * np.sqrt(freq_hz / self.reference_hz) * rg_scale
        return r + 1j * (2 * np.pi * freq_hz * self.inductance_h_per_m)

    def shunt_admittance(self, freq_hz, rg_scale: float = 1.0) -> np.ndarray:
        freq_hz = np.asarray(freq_hz, dtype=np.float64)
        wc = 2 * np.pi * freq_hz * self.capacitance_f_per_m
        return wc * self.loss_tangent * rg_scale + 1j * wc

    def propagation(self, freq_hz, rg_scale: float = 1.0):
        """Per-meter propagation constant and characteristic impedance."""
        z = self.series_impedance(freq_hz, rg_scale)
        y = self.shunt_admittance(freq_hz, rg_scale)
        return np.sqrt(z * y), np.sqrt(z / y)


@dataclass(frozen=True)
class BandSpec:
    """OFDM band layout and the PSDs that turn attenuation into SNR."""

    n_subcarriers: int = 917
    spacing_hz: float = 24414.0
    start_hz: float = 2e6
    tx_psd_dbm_per_hz: float = -55.0
    noise_floor_dbm_per_hz: float = -110.0
    noise_slope_db_per_mhz: float = 0.0
    perturbation_var_db2: float = 1.0

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise ConfigError("BandSpec.n_subcarriers must be >= 1")
        if self.spacing_hz <= 0 or self.start_hz <= 0:
            raise ConfigError("BandSpec frequencies must be positive")
        if self.perturbation_var_db2 < 0:
            raise ConfigError("BandSpec.perturbation_var_db2 must be >= 0")

    def frequencies(self) -> np.ndarray:
        return self.start_hz + self.spacing_hz * np.arange(self.n_subcarriers)

    def noise_psd_dbm(self, freq_hz) -> np.ndarray:
        freq_hz = np.asarray(freq_hz, dtype=np.float64)
        return self.noise_floor_dbm_per_hz + self.noise_slope_db_per_mhz * (
            (freq_hz - self.start_hz) / 1e6
        )


# Port impedances are complex ohms, or "matched" to track the healthy line's
# characteristic impedance across the band.
PortImpedance = Union[complex, str]
MATCHED = "matched"


@dataclass(frozen=True)
class TopologySpec:
    """T-topology geometry: trunk from transmitter to tee to receiver, with
    one terminated branch hanging off the tee."""

    trunk_tx_to_tee_m: float = 400.0
    tee_to_rx_m: float = 600.0
    branch_m: float = 200.0
    branch_load_model: str = "l3"
    tx_impedance_ohm: PortImpedance = 50 + 0j
    rx_impedance_ohm: PortImpedance = 50 + 0j

    def __post_init__(self):
        if self.trunk_tx_to_tee_m <= 0 or self.tee_to_rx_m <= 0:
            raise ConfigError("trunk segment lengths must be strictly positive")
        if self.branch_m < 0:
            raise ConfigError("branch length must be >= 0")
        if self.branch_load_model not in LOAD_MODELS:
            raise ConfigError(
                f"branch_load_model must be one of {LOAD_MODELS}, "
                f"got {self.branch_load_model!r}"
            )
        for name in ("tx_impedance_ohm", "rx_impedance_ohm"):
            val = getattr(self, name)
            if isinstance(val, str):
                if val != MATCHED:
                    raise ConfigError(f"{name} must be complex ohms or '{MATCHED}'")
            elif complex(val).real <= 0:
                raise ConfigError(f"{name} must have a positive real part")

    @property
    def trunk_total_m(self) -> float:
        return self.trunk_tx_to_tee_m + self.tee_to_rx_m


FAULT_KINDS = ("none", "concentrated", "distributed", "termination_change", "incipient")


@dataclass(frozen=True)
class FaultView:
    """Per-sample resolved line modification: an optional PUL R and G scale
    over a trunk span, and an optional shunt conductance at a point.
    A negative shunt position means no shunt."""

    rg_scale: float = 1.0
    span_start_m: float = 0.0
    span_end_m: float = 0.0
    shunt_position_m: float = -1.0
    shunt_conductance_s: float = 0.0


HEALTHY_VIEW = FaultView()


@dataclass(frozen=True)
class FaultSpec:
    """Declarative description of the injected anomaly."""

    kind: str = "none"
    onset_index: int = 0
    location_m: float = 100.0
    extent_m: float = 300.0
    fault_resistance_ohm: float = 100.0
    severity_fraction: float = 0.0
    ramp_end_index: int = 0
    peak_scale: float = 2.0
    switch_duration_samples: int = 4
    switch_to_model: str = "l1"

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ConfigError(f"fault kind must be one of {FAULT_KINDS}, got {self.kind!r}")
        if self.onset_index < 0:
            raise ConfigError("onset_index must be >= 0")
        if self.severity_fraction < 0:
            raise ConfigError("severity_fraction must be >= 0")
        if self.kind == "concentrated" and self.fault_resistance_ohm <= 0:
            raise ConfigError("fault_resistance_ohm must be > 0 for concentrated faults")
        if self.kind in ("distributed", "incipient") and self.extent_m <= 0:
            raise ConfigError("extent_m must be > 0 for distributed/incipient faults")
        if self.kind == "incipient":
            if self.ramp_end_index <= self.onset_index:
                raise ConfigError("ramp_end_index must exceed onset_index for incipient faults")
            if self.peak_scale < 0:
                raise ConfigError("peak_scale must be >= 0")
        if self.kind == "termination_change":
            if self.switch_duration_samples < 1:
                raise ConfigError("switch_duration_samples must be >= 1")
            if self.switch_to_model not in LOAD_MODELS:
                raise ConfigError(
                    f"switch_to_model must be one of {LOAD_MODELS}, "
                    f"got {self.switch_to_model!r}"
                )

    def severity_at(self, index: int) -> float:
        """Severity schedule: constant for distributed faults, a linear ramp
        from 0 at onset to peak_scale at ramp_end_index for incipient ones."""
        if index < self.onset_index:
            return 0.0
        if self.kind == "distributed":
            return self.severity_fraction
        if self.kind == "incipient":
            if index >= self.ramp_end_index:
                return self.peak_scale
            frac = (index - self.onset_index) / (self.ramp_end_index - self.onset_index)
            return self.peak_scale * frac
        return 0.0

    def view_at(self, index: int) -> FaultView:
        """Resolve the line state for one sample. Termination changes touch
        only the branch load, so their line view stays healthy."""
        if self.kind in ("none", "termination_change") or index < self.onset_index:
            return HEALTHY_VIEW
        if self.kind == "concentrated":
            return FaultView(
                shunt_position_m=self.location_m,
                shunt_conductance_s=1.0 / self.fault_resistance_ohm,
            )
        severity = self.severity_at(index)
        if severity == 0.0:
            return HEALTHY_VIEW
        return FaultView(
            rg_scale=1.0 + severity,
            span_start_m=self.location_m,
            span_end_m=self.location_m + self.extent_m,
        )

    def is_anomalous_at(self, index: int) -> bool:
        return self.kind != "none" and index >= self.onset_index
