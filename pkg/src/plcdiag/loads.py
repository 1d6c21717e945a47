"""Termination-impedance load models driving the channel emulator.

Three generators produce complex impedance sequences sampled every 15
minutes: an auto-regressive model, a cyclic (diurnal) model, and their
arithmetic mean. Load values are complex ohms; a sequence is a 1-D
complex128 array.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError

# Real parts below this are clamped before the value touches the network
# model, keeping terminations passive under pathological configurations.
MIN_REAL_OHM = 0.1


@dataclass(frozen=True)
class ShockParams:
    """Uniform complex shock distribution: Re ~ U[real_low, real_high],
    Im ~ U[imag_low, imag_high]. Degenerate (low == high) supported."""

    real_low: float = 0.0
    real_high: float = 50.0
    imag_low: float = -50.0
    imag_high: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.real_low > self.real_high or self.imag_low > self.imag_high:
            raise ValueError("shock bounds must satisfy low <= high on both axes")

    def with_seed(self, seed: int) -> "ShockParams":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class CyclicProfile:
    """Harmonic content of the cyclic load: (order, sine_amp, cosine_amp)
    triples over a fundamental period, plus a positive real offset."""

    fundamental_period: int = 96
    harmonics: tuple[tuple[int, float, float], ...] = (
        (1, 30.0, 20.0),
        (2, 10.0, 8.0),
        (3, 5.0, 4.0),
    )
    offset_ohm: float = 50.0

    def __post_init__(self):
        if self.fundamental_period < 2:
            raise ValueError("fundamental_period must be >= 2")
        if len(self.harmonics) < 1:
            raise ValueError("at least one harmonic is required")
        for order, _, _ in self.harmonics:
            if int(order) != order or order < 1:
                raise ValueError(f"harmonic order must be a positive integer, got {order}")
        if self.offset_ohm <= 0:
            raise ValueError("offset_ohm must be positive")


def draw_shocks(n: int, params: ShockParams) -> np.ndarray:
    """n complex shocks, deterministic per params.seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(params.seed)
    re = rng.uniform(params.real_low, params.real_high, n)
    im = rng.uniform(params.imag_low, params.imag_high, n)
    return re + 1j * im


def _clamp_real(values: np.ndarray) -> np.ndarray:
    low = values.real < MIN_REAL_OHM
    if not low.any():
        return values
    out = values.copy()
    out[low] = MIN_REAL_OHM + 1j * out[low].imag
    return out


def gen_l1(n: int, shocks: ShockParams) -> np.ndarray:
    """Auto-regressive load: two seeded base cases, then
    0.6*prev + 0.3*prev2 + 0.1*shock."""
    r = draw_shocks(n, shocks)
    out = np.empty(n, dtype=np.complex128)
    out[0] = r[0]
    if n > 1:
        out[1] = 0.8 * out[0] + r[1]
    for j in range(2, n):
        out[j] = 0.6 * out[j - 1] + 0.3 * out[j - 2] + 0.1 * r[j]
    return _clamp_real(out)


def cyclic_component(n: int, profile: CyclicProfile) -> np.ndarray:
    """Harmonic sum (without offset or shocks) evaluated at sample indices."""
    phase = 2.0 * np.pi * np.arange(n) / profile.fundamental_period
    total = np.zeros(n)
    for order, sine_amp, cosine_amp in profile.harmonics:
        total += sine_amp * np.sin(order * phase) + cosine_amp * np.cos(order * phase)
    return total


def gen_l2(n: int, profile: CyclicProfile, shocks: ShockParams) -> np.ndarray:
    """Cyclic load: 0.9 * harmonic sum + 0.1 * shock, raised by the offset."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    r = draw_shocks(n, shocks)
    out = 0.9 * cyclic_component(n, profile) + profile.offset_ohm + 0.1 * r
    return _clamp_real(out)


def gen_l3(l1: np.ndarray, l2: np.ndarray) -> np.ndarray:
    """Hybrid load: elementwise mean of an L1 and an L2 sequence."""
    l1 = np.asarray(l1, dtype=np.complex128)
    l2 = np.asarray(l2, dtype=np.complex128)
    if l1.shape != l2.shape:
        raise DataError(f"length mismatch: {l1.shape} vs {l2.shape}")
    return 0.5 * (l1 + l2)


LOAD_MODELS = ("l1", "l2", "l3")


def _derived_seeds(seed: int, n_children: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n_children)
    return [int(c.generate_state(1)[0]) for c in children]


def gen_load_sequence(
    model: str,
    n: int,
    seed: int,
    shocks: ShockParams = ShockParams(),
    profile: CyclicProfile = CyclicProfile(),
) -> np.ndarray:
    """Generate a named load model, deriving per-submodel shock seeds from seed."""
    if model not in LOAD_MODELS:
        raise ValueError(f"unknown load model {model!r}, expected one of {LOAD_MODELS}")
    seed_a, seed_b = _derived_seeds(seed, 2)
    if model == "l1":
        return gen_l1(n, shocks.with_seed(seed_a))
    if model == "l2":
        return gen_l2(n, profile, shocks.with_seed(seed_b))
    part1 = gen_l1(n, shocks.with_seed(seed_a))
    part2 = gen_l2(n, profile, shocks.with_seed(seed_b))
    return gen_l3(part1, part2)


def write_loads_csv(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.complex128)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "real_ohms", "imag_ohms"])
        for idx, val in enumerate(values):
            writer.writerow([idx, repr(float(val.real)), repr(float(val.imag))])


def read_loads_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "real_ohms", "imag_ohms"]:
            raise DataError(f"unexpected load CSV header in {path}: {header}")
        values = [complex(float(row[1]), float(row[2])) for row in reader]
    if not values:
        raise DataError(f"load CSV {path} contains no rows")
    return np.asarray(values, dtype=np.complex128)
