"""Numba acceleration shim with a registry of kernel variants.

Every hot kernel is written twice: a scalar-loop form that numba can compile
and (where the loop form would be slow in plain Python) a vectorized numpy
form. ``register`` picks the active variant at import time and records both
so ``benchmarks/bench_kernels.py`` can time them against each other.

Set ``PLCDIAG_DISABLE_NUMBA=1`` (or true/yes/on) to force the fallback path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Optional

DISABLE_ENV = "PLCDIAG_DISABLE_NUMBA"


def _env_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


NUMBA_ENABLED = False
if not _env_disabled():
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def jit(func: Callable) -> Callable:
    """Compile with numba when enabled, otherwise return the function unchanged."""
    if NUMBA_ENABLED:
        import numba

        return numba.njit(cache=True)(func)
    return func


@dataclass
class KernelPair:
    """One kernel's implementations: loop form, optional numpy form, active pick."""

    name: str
    py_func: Callable
    numpy_func: Optional[Callable]
    jitted: Optional[Callable]
    active: Callable


KERNELS: dict[str, KernelPair] = {}


def register(name: str, py_func: Callable, numpy_func: Optional[Callable] = None) -> Callable:
    """Register a kernel and return the variant to use at runtime.

    With numba enabled the loop form is compiled and used; otherwise the
    numpy form (falling back to the plain loop form) is used.
    """
    jitted = jit(py_func) if NUMBA_ENABLED else None
    active = jitted if jitted is not None else (numpy_func or py_func)
    KERNELS[name] = KernelPair(name, py_func, numpy_func, jitted, active)
    return active
