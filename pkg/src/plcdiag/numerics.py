"""Special functions and small symmetric linear algebra.

The chi-squared quantile is computed from a hand-rolled regularized lower
incomplete gamma function (series + Lentz continued fraction) so that the
statistical core carries no external special-function dependency. Matrix
inversion goes through Cholesky, which doubles as the positive-definiteness
check.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from . import _accel
from .errors import NotPositiveDefiniteError

# Iteration caps sized for dof <= a few hundred; both expansions converge in
# well under 100 terms there.
_MAX_ITER = 600
_TINY = 1e-300


def _reg_lower_gamma_py(a: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    log_prefactor = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        # Series expansion of P(a, x).
        ap = a
        term = 1.0 / a
        total = term
        for _ in range(_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return total * math.exp(log_prefactor)
    # Modified Lentz continued fraction for Q(a, x).
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    q = math.exp(log_prefactor) * h
    return 1.0 - q


_reg_lower_gamma = _accel.register("reg_lower_gamma", _reg_lower_gamma_py)


def _check_dof(dof: int) -> int:
    if not isinstance(dof, (int, np.integer)) or isinstance(dof, bool):
        raise ValueError(f"degrees of freedom must be an integer, got {dof!r}")
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    return int(dof)


def chi2_cdf(x: float, dof: int) -> float:
    """CDF of the chi-squared distribution with `dof` degrees of freedom."""
    dof = _check_dof(dof)
    if x <= 0.0:
        return 0.0
    return float(_reg_lower_gamma(0.5 * dof, 0.5 * float(x)))


def chi2_quantile(dof: int, prob: float) -> float:
    """Inverse chi-squared CDF, solved by bisection to ~1e-10 absolute error.

    Raises ValueError unless 0 < prob < 1.
    """
    dof = _check_dof(dof)
    prob = float(prob)
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must lie strictly inside (0, 1), got {prob}")
    lo = 0.0
    hi = dof + 10.0 + 20.0 * math.sqrt(2.0 * dof)
    for _ in range(200):
        if chi2_cdf(hi, dof) >= prob:
            break
        hi *= 2.0
    else:
        raise ArithmeticError("failed to bracket the chi-squared quantile")
    for _ in range(260):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def _as_sym_matrix(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"{what} must be a square matrix with dim >= 1, got shape {m.shape}")
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    if float(np.max(np.abs(m - m.T))) > 1e-10 * max(1.0, scale):
        raise ValueError(f"{what} is not symmetric within 1e-10 relative tolerance")
    return m


def sym_inverse(m: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Inverse of (m + ridge*I) for symmetric positive definite input.

    Uses a Cholesky factorization; a failed factorization raises
    NotPositiveDefiniteError. The result is symmetrized exactly.
    """
    m = _as_sym_matrix(m, "matrix")
    ridge = float(ridge)
    if ridge < 0.0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    a = m + ridge * np.eye(m.shape[0])
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"matrix (dim {m.shape[0]}, ridge {ridge:g}) is not positive definite"
        ) from exc
    lower_inv = scipy.linalg.solve_triangular(lower, np.eye(m.shape[0]), lower=True)
    inv = lower_inv.T @ lower_inv
    return 0.5 * (inv + inv.T)


def psd_factor(cov: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Factor F with F @ F.T = cov, accepting positive semi-definite input.

    Tries Cholesky first; on failure falls back to an eigendecomposition,
    clipping eigenvalues within -rel_tol*max_eig of zero. A genuinely
    negative eigenvalue raises NotPositiveDefiniteError.
    """
    cov = _as_sym_matrix(cov, "covariance")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eigvals, eigvecs = np.linalg.eigh(cov)
    floor = -rel_tol * max(float(eigvals.max()), 1e-30)
    if float(eigvals.min()) < floor:
        raise NotPositiveDefiniteError(
            f"covariance has negative eigenvalue {eigvals.min():.3e}"
        )
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def gaussian_vectors(
    mean: np.ndarray, cov: np.ndarray, n: int, seed_or_rng
) -> np.ndarray:
    """Draw n vectors from N(mean, cov), deterministic per seed. Shape (n, dim)."""
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    factor = psd_factor(cov)
    if factor.shape[0] != mean.shape[0]:
        raise ValueError(
            f"mean has dim {mean.shape[0]} but covariance has dim {factor.shape[0]}"
        )
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = _as_rng(seed_or_rng)
    z = rng.standard_normal((int(n), mean.shape[0]))
    return mean + z @ factor.T


def gaussian_vector(mean: np.ndarray, cov: np.ndarray, seed_or_rng) -> np.ndarray:
    """Single draw from N(mean, cov)."""
    return gaussian_vectors(mean, cov, 1, seed_or_rng)[0]
