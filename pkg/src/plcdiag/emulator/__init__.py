"""Bottom-up PLC channel emulator.

Builds end-to-end channel frequency responses for a T-topology network by
chaining two-port ABCD matrices over a two-conductor equivalent line, folds
the branch in as a shunt admittance at the tee, injects faults, and
synthesizes per-subcarrier SNR panels with ground-truth anomaly masks.
"""

from .cable import (
    BandSpec,
    CableSpec,
    FAULT_KINDS,
    FaultSpec,
    FaultView,
    HEALTHY_VIEW,
    MATCHED,
    TopologySpec,
)
from .network import abcd_segment, cfr, resolve_ports
from .synthesis import (
    Dataset,
    Scenario,
    anomaly_mask,
    branch_loads,
    dataset_paths,
    days_to_samples,
    generate_dataset,
    read_dataset,
    scenario_from_dict,
    scenario_to_dict,
    snr_panel,
    write_dataset,
)

__all__ = [
    "BandSpec",
    "CableSpec",
    "Dataset",
    "FAULT_KINDS",
    "FaultSpec",
    "FaultView",
    "HEALTHY_VIEW",
    "MATCHED",
    "Scenario",
    "TopologySpec",
    "abcd_segment",
    "anomaly_mask",
    "branch_loads",
    "cfr",
    "dataset_paths",
    "days_to_samples",
    "generate_dataset",
    "read_dataset",
    "resolve_ports",
    "scenario_from_dict",
    "scenario_to_dict",
    "snr_panel",
    "write_dataset",
]
