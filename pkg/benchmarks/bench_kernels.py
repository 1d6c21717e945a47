"""Time every registered hot kernel: numba-compiled loop vs numpy fallback.

Each kernel in ``plcdiag._accel.KERNELS`` is written twice — a scalar loop
that numba compiles and a vectorized numpy form used when numba is disabled
(``PLCDIAG_DISABLE_NUMBA=1``) or unavailable.  This script runs both variants
on identical, realistically sized inputs, reports the median wall time per
call, the speedup, and the largest output disagreement.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 11 --kernel fold_transfer
"""

from __future__ import annotations

import argparse
import math
import statistics
import time

import numpy as np

from plcdiag import _accel

# Ensure every register() call has run before we look at the table.
import plcdiag.emulator.network  # noqa: F401
import plcdiag.forecasting.arima  # noqa: F401
import plcdiag.forecasting.boosting  # noqa: F401
import plcdiag.numerics  # noqa: F401


def _abcd_like(rng: np.random.Generator, shape) -> np.ndarray:
    """Random complex ABCD-ish chains: near identity with mild off-diagonals."""
    out = 0.2 * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    out[..., 0] += 1.0
    out[..., 3] += 1.0
    return out


def make_cases(rng: np.random.Generator) -> dict:
    """Single-call wrappers for each registered kernel.

    Every case maps name -> run where ``run(func, None)`` executes one timed
    batch and returns an array for the agreement check.  Batch sizes are
    chosen so one call lands in the millisecond range for the fast variant.
    """
    cases = {}

    # ARIMA conditional-sum-of-squares objective on a differenced day-scale
    # series; the optimizer evaluates this hundreds of times per fit.
    u = rng.standard_normal(4096)
    phi = np.array([0.6, -0.25])
    theta = np.array([0.3])

    def run_css(func, _inputs):
        total = 0.0
        for _ in range(100):
            total += func(u, phi, theta, 0.05)
        return np.array([total])

    cases["arima_css"] = run_css

    # Rolling one-step forecasts over a long level series (window 96, d=1).
    series = np.cumsum(rng.standard_normal(9_696)) * 0.1 + 30.0
    fc_out = np.empty(series.size - 96)

    def run_forecast(func, _inputs):
        func(series, 96, 96, 1, phi, theta, 0.0, fc_out)
        return fc_out.copy()

    cases["arima_forecast"] = run_forecast

    # Best split search for one boosting round: 96 lag features, presorted.
    st_inputs = rng.standard_normal((2048, 96))
    st_order = np.ascontiguousarray(np.argsort(st_inputs, axis=0).T)
    st_residual = rng.standard_normal(2048)
    st_out = np.zeros(5)

    def run_stump(func, _inputs):
        func(st_inputs, st_order, st_residual, st_out)
        return st_out.copy()

    cases["boost_stump"] = run_stump

    # Channel-gain fold across the band for a day of samples: per-sample
    # branch load folded through precomputed pre/post chains.
    n_freq, n_states, n_samples = 917, 6, 960
    a_pre = _abcd_like(rng, (n_states, n_freq, 4))
    a_post = _abcd_like(rng, (n_states, n_freq, 4))
    state_idx = rng.integers(0, n_states, n_samples)
    loads = 30.0 + 40.0 * rng.random(n_samples) + 8j * rng.random(n_samples)
    zc_b = 40.0 + 15.0 * rng.random(n_freq) + 3j * rng.random(n_freq)
    tanh_b = np.tanh((0.02 + 0.05 * rng.random(n_freq)) + 2j * rng.random(n_freq))
    z1 = np.full(n_freq, 50.0 + 0j)
    z2 = np.full(n_freq, 50.0 + 0j)
    amp = np.ones(n_freq)
    ft_out = np.empty((n_samples, n_freq))

    def run_fold(func, _inputs):
        func(a_pre, a_post, state_idx, loads, zc_b, tanh_b, z1, z2, amp, ft_out)
        return ft_out.copy()

    cases["fold_transfer"] = run_fold

    # Regularized lower incomplete gamma, the chi-squared CDF workhorse.
    # Scalar kernel, so one batch sweeps a grid of arguments.
    grid = np.linspace(0.05, 40.0, 4000)

    def run_gamma(func, _inputs):
        return np.array([func(4.5, float(x)) for x in grid])

    cases["reg_lower_gamma"] = run_gamma

    return cases


def median_ms(run, func, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        run(func, None)
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7,
                        help="timed repetitions per variant (median reported)")
    parser.add_argument("--kernel", action="append", choices=sorted(_accel.KERNELS),
                        help="benchmark only this kernel (repeatable)")
    parser.add_argument("--seed", type=int, default=0, help="input RNG seed")
    args = parser.parse_args(argv)

    if not _accel.NUMBA_ENABLED:
        print("numba is disabled (PLCDIAG_DISABLE_NUMBA set or numba missing); "
              "timing the fallback path only.")

    cases = make_cases(np.random.default_rng(args.seed))
    names = args.kernel or sorted(_accel.KERNELS)

    header = (f"{'kernel':<16} {'numba ms':>10} {'fallback ms':>12} "
              f"{'speedup':>8} {'max |diff|':>11}  fallback form")
    print(header)
    print("-" * len(header))
    for name in names:
        pair = _accel.KERNELS[name]
        run = cases[name]
        fallback = pair.numpy_func or pair.py_func
        form = "numpy" if pair.numpy_func is not None else "python loop"

        out_fb = run(fallback, None)
        ms_fb = median_ms(run, fallback, args.repeats)

        if pair.jitted is not None:
            out_nb = run(pair.jitted, None)  # warm-up call compiles
            ms_nb = median_ms(run, pair.jitted, args.repeats)
            diff = float(np.max(np.abs(out_nb - out_fb)))
            speedup = ms_fb / ms_nb if ms_nb > 0 else math.inf
            print(f"{name:<16} {ms_nb:>10.3f} {ms_fb:>12.3f} "
                  f"{speedup:>7.1f}x {diff:>11.2e}  {form}")
        else:
            print(f"{name:<16} {'n/a':>10} {ms_fb:>12.3f} "
                  f"{'n/a':>8} {'n/a':>11}  {form}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
