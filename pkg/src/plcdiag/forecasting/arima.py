"""ARIMA(p, d, q) forecasting fitted by conditional sum of squares.

The d-times-differenced series is modeled as ARMA(p, q) with intercept:
u_t = c + sum_j phi_j u_{t-j} + a_t + sum_k theta_k a_{t-k}, with shocks
before the conditioning point set to zero. Pure AR models (q = 0) are fitted
exactly by least squares; models with an MA part start from Hannan-Rissanen
estimates and are refined by Nelder-Mead on the CSS objective, with
non-invertible MA coefficients repelled by a penalty. Rolling forecasts
are window-local: each one-step forecast differences the w most recent
values, reconstructs shocks from zero initial conditions, and integrates
the differenced forecast back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .. import _accel
from ..errors import ConfigError, FitDivergenceError, InsufficientDataError
from ..timeseries import normalized_rmse
from ..errors import DataError
from .base import DEFAULT_WINDOW, Predictor, _as_series, register_predictor

MAX_ORDER = 2
_PENALTY = 1e12


def _validate_order(p: int, d: int, q: int) -> tuple[int, int, int]:
    p, d, q = int(p), int(d), int(q)
    for name, val in (("p", p), ("d", d), ("q", q)):
        if not 0 <= val <= MAX_ORDER:
            raise ConfigError(f"ARIMA order {name} must be in [0, {MAX_ORDER}], got {val}")
    if p == 0 and d == 0 and q == 0:
        raise ConfigError("ARIMA(0,0,0) has no structure to fit")
    return p, d, q


@dataclass(frozen=True)
class ArimaParams:
    """Fitted ARIMA parameter record."""

    p: int
    d: int
    q: int
    phi: tuple[float, ...]
    theta: tuple[float, ...]
    intercept: float
    noise_variance: float

    def __post_init__(self):
        _validate_order(self.p, self.d, self.q)
        if len(self.phi) != self.p or len(self.theta) != self.q:
            raise ConfigError(
                f"coefficient lengths ({len(self.phi)}, {len(self.theta)}) do not "
                f"match orders (p={self.p}, q={self.q})"
            )
        if self.noise_variance < 0:
            raise ConfigError("noise_variance must be >= 0")


def _lag_poly_stable(coefs: np.ndarray) -> bool:
    """True when 1 - c1 z - c2 z^2 has all roots outside the unit circle
    (orders 0..2 in closed form)."""
    if coefs.shape[0] == 0:
        return True
    if coefs.shape[0] == 1:
        return abs(coefs[0]) < 1.0
    c1, c2 = coefs[0], coefs[1]
    return abs(c2) < 1.0 and c1 + c2 < 1.0 and c2 - c1 < 1.0


def invertible(theta: np.ndarray) -> bool:
    """MA polynomial 1 + theta_1 z + ... has roots outside the unit circle."""
    return _lag_poly_stable(-np.asarray(theta, dtype=np.float64))


# ---------------------------------------------------------------------------
# Kernels: CSS objective and rolling window-local forecasts.


def _css_ssr_py(u, phi, theta, c):
    n = u.shape[0]
    p = phi.shape[0]
    q = theta.shape[0]
    a = np.zeros(n)
    ssr = 0.0
    for t in range(p, n):
        e = u[t] - c
        for j in range(p):
            e -= phi[j] * u[t - 1 - j]
        for k in range(q):
            idx = t - 1 - k
            if idx >= 0:
                e -= theta[k] * a[idx]
        a[t] = e
        ssr += e * e
    return ssr


def _css_ssr_numpy(u, phi, theta, c):
    n = u.shape[0]
    p = phi.shape[0]
    if n <= p:
        return 0.0
    e = u[p:] - c
    for j in range(1, p + 1):
        e = e - phi[j - 1] * u[p - j : n - j]
    if theta.shape[0]:
        # shock recursion a_t + sum_k theta_k a_{t-k} = e_t, zero initial state
        e = lfilter(np.ones(1), np.concatenate((np.ones(1), theta)), e)
    return float(e @ e)


_css_ssr = _accel.register("arima_css", _css_ssr_py, _css_ssr_numpy)


def _forecast_py(series, start, w, d, phi, theta, c, out):
    p = phi.shape[0]
    q = theta.shape[0]
    buf = np.empty(w)
    a = np.empty(w)
    tails = np.empty(max(d, 1))
    for i in range(out.shape[0]):
        j = start + i
        for t in range(w):
            buf[t] = series[j - w + t]
        m = w
        for level in range(d):
            tails[level] = buf[m - 1]
            for t in range(m - 1):
                buf[t] = buf[t + 1] - buf[t]
            m -= 1
        for t in range(m):
            a[t] = 0.0
        for t in range(p, m):
            e = buf[t] - c
            for jj in range(p):
                e -= phi[jj] * buf[t - 1 - jj]
            for k in range(q):
                idx = t - 1 - k
                if idx >= 0:
                    e -= theta[k] * a[idx]
            a[t] = e
        f = c
        for jj in range(p):
            f += phi[jj] * buf[m - 1 - jj]
        for k in range(q):
            idx = m - 1 - k
            if idx >= 0:
                f += theta[k] * a[idx]
        for level in range(d - 1, -1, -1):
            f += tails[level]
        out[i] = f


def _forecast_numpy(series, start, w, d, phi, theta, c, out):
    n_out = out.shape[0]
    if n_out == 0:
        return
    p = phi.shape[0]
    q = theta.shape[0]
    wins = np.lib.stride_tricks.sliding_window_view(series, w)[start - w : start - w + n_out]
    buf = np.array(wins, dtype=np.float64)
    tails = []
    m = w
    for _ in range(d):
        tails.append(buf[:, m - 1].copy())
        buf = np.diff(buf[:, :m], axis=1)
        m -= 1
    u = buf[:, :m]
    f = np.full(n_out, c)
    for jj in range(p):
        f += phi[jj] * u[:, m - 1 - jj]
    if q:
        a = np.zeros((n_out, m))
        for t in range(p, m):
            e = u[:, t] - c
            for jj in range(p):
                e = e - phi[jj] * u[:, t - 1 - jj]
            for k in range(q):
                idx = t - 1 - k
                if idx >= 0:
                    e = e - theta[k] * a[:, idx]
            a[:, t] = e
        for k in range(q):
            idx = m - 1 - k
            if idx >= 0:
                f += theta[k] * a[:, idx]
    for level in range(d - 1, -1, -1):
        f = f + tails[level]
    out[:] = f


_forecast = _accel.register("arima_forecast", _forecast_py, _forecast_numpy)


# ---------------------------------------------------------------------------


@register_predictor
class ArimaPredictor(Predictor):
    kind = "arima"

    def __init__(self, p: int = 2, d: int = 1, q: int = 1, window: int = DEFAULT_WINDOW):
        super().__init__(window=window)
        self.p, self.d, self.q = _validate_order(p, d, q)
        if self.window <= self.p + self.d + self.q:
            raise ConfigError(
                f"window ({self.window}) must exceed p+d+q "
                f"({self.p + self.d + self.q}) for window-local forecasting"
            )

    def min_train_length(self) -> int:
        return max(self.window + 1, self.p + self.d + self.q + 2)

    # -- fitting ------------------------------------------------------------

    def _fit(self, series: np.ndarray) -> None:
        u = np.diff(series, n=self.d) if self.d else series.copy()
        if u.shape[0] < self.p + self.q + 2:
            raise InsufficientDataError(
                f"need more than {self.p + self.q + self.d + 1} samples to fit "
                f"ARIMA({self.p},{self.d},{self.q})"
            )
        if self.q == 0:
            c, phi = self._fit_ols(u, self.p)
            theta = np.empty(0)
        else:
            c, phi, theta = self._fit_css(u)
        ssr = _css_ssr(u, phi, theta, c)
        if not np.isfinite(ssr):
            raise FitDivergenceError(
                f"ARIMA({self.p},{self.d},{self.q}) CSS objective is non-finite"
            )
        self.phi_ = phi
        self.theta_ = theta
        self.intercept_ = float(c)
        self.sigma2_ = float(ssr / max(1, u.shape[0] - self.p))

    @staticmethod
    def _fit_ols(u: np.ndarray, p: int) -> tuple[float, np.ndarray]:
        """Exact CSS minimizer for pure AR: least squares on lagged values."""
        n = u.shape[0]
        design = np.empty((n - p, p + 1))
        design[:, 0] = 1.0
        for j in range(1, p + 1):
            design[:, j] = u[p - j : n - j]
        coef, *_ = np.linalg.lstsq(design, u[p:], rcond=None)
        return float(coef[0]), coef[1:].copy()

    def _fit_css(self, u: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        p, q = self.p, self.q
        x0 = self._hannan_rissanen(u)

        def objective(x):
            c, phi, theta = x[0], x[1 : 1 + p], x[1 + p :]
            if not invertible(theta):
                return _PENALTY * (1.0 + float(np.abs(theta).sum()))
            return _css_ssr(u, phi, theta, c)

        result = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 4000, "maxfev": 8000},
        )
        best = result.x if objective(result.x) <= objective(x0) else x0
        c, phi, theta = float(best[0]), best[1 : 1 + p].copy(), best[1 + p :].copy()
        if not invertible(theta) or not np.isfinite(best).all():
            raise FitDivergenceError(
                f"ARIMA({p},{self.d},{q}) CSS fit did not reach an invertible model"
            )
        return c, phi, theta

    def _hannan_rissanen(self, u: np.ndarray) -> np.ndarray:
        """Initial (c, phi, theta): regress on lagged values and proxy shocks
        from a long-AR prefit; fall back to a flat start on short series."""
        p, q = self.p, self.q
        n = u.shape[0]
        m_long = max(4, 2 * (p + q))
        x0 = np.zeros(1 + p + q)
        x0[0] = float(u.mean())
        if n - m_long - q <= p + q + 1:
            return x0
        c_l, phi_l = self._fit_ols(u, m_long)
        shocks = np.zeros(n)
        for t in range(m_long, n):
            e = u[t] - c_l
            for j in range(1, m_long + 1):
                e -= phi_l[j - 1] * u[t - j]
            shocks[t] = e
        t0 = m_long + q
        rows = n - t0
        design = np.empty((rows, 1 + p + q))
        design[:, 0] = 1.0
        for j in range(1, p + 1):
            design[:, j] = u[t0 - j : n - j]
        for k in range(1, q + 1):
            design[:, p + k] = shocks[t0 - k : n - k]
        coef, *_ = np.linalg.lstsq(design, u[t0:], rcond=None)
        theta = coef[1 + p :]
        for _ in range(200):
            if invertible(theta):
                break
            theta = theta * 0.9
        if not invertible(theta):
            theta = np.zeros(q)
        out = np.concatenate(([coef[0]], coef[1 : 1 + p], theta))
        return out if np.isfinite(out).all() else x0

    @classmethod
    def from_params(
        cls,
        p: int,
        d: int,
        q: int,
        phi=(),
        theta=(),
        intercept: float = 0.0,
        noise_variance: float = 1.0,
        window: int = DEFAULT_WINDOW,
    ) -> "ArimaPredictor":
        """A fitted predictor from explicit coefficients (no estimation)."""
        model = cls(p=p, d=d, q=q, window=window)
        params = ArimaParams(
            p=model.p, d=model.d, q=model.q,
            phi=tuple(float(v) for v in phi),
            theta=tuple(float(v) for v in theta),
            intercept=float(intercept),
            noise_variance=float(noise_variance),
        )
        model.phi_ = np.asarray(params.phi, dtype=np.float64)
        model.theta_ = np.asarray(params.theta, dtype=np.float64)
        model.intercept_ = params.intercept
        model.sigma2_ = params.noise_variance
        model._fitted = True
        return model

    @property
    def params(self) -> ArimaParams:
        self._require_fitted()
        return ArimaParams(
            p=self.p, d=self.d, q=self.q,
            phi=tuple(self.phi_.tolist()),
            theta=tuple(self.theta_.tolist()),
            intercept=self.intercept_,
            noise_variance=self.sigma2_,
        )

    # -- prediction ---------------------------------------------------------

    def _predict_one(self, window_values: np.ndarray) -> float:
        padded = np.append(window_values, 0.0)
        out = np.empty(1)
        _forecast(padded, self.window, self.window, self.d,
                  self.phi_, self.theta_, self.intercept_, out)
        return float(out[0])

    def _predict_series(self, series: np.ndarray, start: int) -> np.ndarray:
        out = np.empty(series.shape[0] - start)
        _forecast(series, start, self.window, self.d,
                  self.phi_, self.theta_, self.intercept_, out)
        return out

    # -- serialization ------------------------------------------------------

    def hyperparams(self) -> dict:
        return {"window": self.window, "p": self.p, "d": self.d, "q": self.q}

    def state(self) -> dict:
        self._require_fitted()
        return {
            "phi": self.phi_.tolist(),
            "theta": self.theta_.tolist(),
            "intercept": self.intercept_,
            "noise_variance": self.sigma2_,
        }

    def _restore(self, state: dict) -> None:
        self.phi_ = np.asarray(state["phi"], dtype=np.float64)
        self.theta_ = np.asarray(state["theta"], dtype=np.float64)
        if self.phi_.shape[0] != self.p or self.theta_.shape[0] != self.q:
            raise ConfigError("stored ARIMA coefficients do not match the declared order")
        self.intercept_ = float(state["intercept"])
        self.sigma2_ = float(state["noise_variance"])


# ---------------------------------------------------------------------------


GRID_ORDERS = tuple(
    (p, d, q)
    for p in range(MAX_ORDER + 1)
    for d in range(MAX_ORDER + 1)
    for q in range(MAX_ORDER + 1)
    if not (p == 0 and q == 0)
)


def arima_grid_search(
    series,
    validation_fraction: float = 0.2,
    window: int = DEFAULT_WINDOW,
) -> ArimaPredictor:
    """Fit every candidate order, score each by normalized RMSE of rolling
    forecasts on a held-out tail of the training series, and return the
    winner refitted on the full series (ties broken by smaller p+d+q).

    The per-candidate scoreboard is attached to the result as
    ``search_records`` (a list of dicts with order, score, error).
    """
    series = _as_series(series)
    if not 0.0 < validation_fraction < 1.0:
        raise ConfigError(
            f"validation_fraction must be in (0, 1), got {validation_fraction}"
        )
    n = series.shape[0]
    n_val = max(1, int(round(validation_fraction * n)))
    split = n - n_val
    if split <= window + MAX_ORDER * 3 + 1:
        raise InsufficientDataError(
            f"training head of {split} samples is too short for the candidate "
            f"grid at window {window}"
        )
    head = series[:split]
    records = []
    best_key = None
    best_order = None
    for order in GRID_ORDERS:
        record = {"p": order[0], "d": order[1], "q": order[2],
                  "score": None, "error": None}
        records.append(record)
        try:
            candidate = ArimaPredictor(*order, window=window).fit(head)
            preds = candidate.predict_series(series, split)
            record["score"] = float(normalized_rmse(series[split:], preds))
        except (FitDivergenceError, InsufficientDataError, DataError) as exc:
            record["error"] = str(exc)
            continue
        key = (record["score"], sum(order), order)
        if best_key is None or key < best_key:
            best_key = key
            best_order = order
    if best_order is None:
        raise FitDivergenceError("every ARIMA candidate failed to fit")
    best = ArimaPredictor(*best_order, window=window).fit(series)
    best.search_records = records
    return best
