"""Gradient boosting with depth-1 regression stumps under squared loss.

Each stage fits one stump (feature index, midpoint threshold, left/right
means) to the current residual by exhaustive search over all features and
all distinct-value split points, then shrinks its contribution. Stored
stump values are the unscaled leaf means; shrinkage is applied at
prediction time. Training stops early when the best achievable gain is
negligible relative to the residual energy.
"""

from __future__ import annotations

import numpy as np

from .. import _accel
from ..errors import ConfigError
from .base import DEFAULT_WINDOW, Predictor, register_predictor, sliding_windows

_GAIN_RTOL = 1e-12


def _best_stump_py(inputs, order, residual, out):
    n, n_feat = inputs.shape
    out[0] = -1.0
    out[1] = 0.0
    out[2] = 0.0
    out[3] = 0.0
    out[4] = 0.0
    if n < 2:
        return
    total = 0.0
    for i in range(n):
        total += residual[i]
    base = total * total / n
    best_gain = 0.0
    for f in range(n_feat):
        left_sum = 0.0
        for i in range(n - 1):
            idx = order[f, i]
            left_sum += residual[idx]
            v_lo = inputs[idx, f]
            v_hi = inputs[order[f, i + 1], f]
            if v_hi <= v_lo:
                continue
            n_left = i + 1
            right_sum = total - left_sum
            n_right = n - n_left
            gain = (left_sum * left_sum / n_left
                    + right_sum * right_sum / n_right - base)
            if gain > best_gain:
                best_gain = gain
                out[0] = f
                out[1] = 0.5 * (v_lo + v_hi)
                out[2] = left_sum / n_left
                out[3] = right_sum / n_right
                out[4] = gain
    return


def _best_stump_numpy(inputs, order, residual, out):
    n, n_feat = inputs.shape
    out[0] = -1.0
    out[1] = 0.0
    out[2] = 0.0
    out[3] = 0.0
    out[4] = 0.0
    if n < 2:
        return
    total = float(residual.sum())
    base = total * total / n
    best_gain = 0.0
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    for f in range(n_feat):
        idx = order[f]
        v = inputs[idx, f]
        cum = np.cumsum(residual[idx])[:-1]
        gains = cum * cum / n_left + (total - cum) ** 2 / n_right - base
        gains[v[1:] <= v[:-1]] = -np.inf
        k = int(np.argmax(gains))
        if gains[k] > best_gain:
            best_gain = float(gains[k])
            out[0] = f
            out[1] = 0.5 * (v[k] + v[k + 1])
            out[2] = cum[k] / n_left[k]
            out[3] = (total - cum[k]) / n_right[k]
            out[4] = best_gain
    return


_best_stump = _accel.register("boost_stump", _best_stump_py, _best_stump_numpy)


@register_predictor
class L2BoostPredictor(Predictor):
    kind = "l2boost"

    def __init__(
        self,
        n_stages: int = 100,
        shrinkage: float = 0.1,
        window: int = DEFAULT_WINDOW,
    ):
        super().__init__(window=window)
        n_stages = int(n_stages)
        if n_stages < 1:
            raise ConfigError(f"n_stages must be >= 1, got {n_stages}")
        shrinkage = float(shrinkage)
        if not 0.0 < shrinkage <= 2.0:
            raise ConfigError(f"shrinkage must be in (0, 2], got {shrinkage}")
        self.n_stages = n_stages
        self.shrinkage = shrinkage

    def _fit(self, series: np.ndarray) -> None:
        inputs, labels = sliding_windows(series, self.window)
        inputs = np.ascontiguousarray(inputs, dtype=np.float64)
        order = np.ascontiguousarray(np.argsort(inputs, axis=0, kind="stable").T)
        self.intercept_ = float(labels.mean())
        residual = labels - self.intercept_
        feats, thrs, lefts, rights = [], [], [], []
        mse_path = [float(residual @ residual) / residual.shape[0]]
        out = np.empty(5)
        for _ in range(self.n_stages):
            _best_stump(inputs, order, residual, out)
            if out[0] < 0 or out[4] <= _GAIN_RTOL * float(residual @ residual):
                break
            feat = int(out[0])
            feats.append(feat)
            thrs.append(out[1])
            lefts.append(out[2])
            rights.append(out[3])
            step = np.where(inputs[:, feat] <= out[1], out[2], out[3])
            residual -= self.shrinkage * step
            mse_path.append(float(residual @ residual) / residual.shape[0])
        self.features_ = np.asarray(feats, dtype=np.int64)
        self.thresholds_ = np.asarray(thrs, dtype=np.float64)
        self.left_values_ = np.asarray(lefts, dtype=np.float64)
        self.right_values_ = np.asarray(rights, dtype=np.float64)
        self.train_mse_path_ = np.asarray(mse_path, dtype=np.float64)

    @property
    def n_fitted_stages(self) -> int:
        self._require_fitted()
        return self.features_.shape[0]

    def _decision(self, rows: np.ndarray) -> np.ndarray:
        preds = np.full(rows.shape[0], self.intercept_)
        for feat, thr, left, right in zip(
            self.features_, self.thresholds_, self.left_values_, self.right_values_
        ):
            preds += self.shrinkage * np.where(rows[:, feat] <= thr, left, right)
        return preds

    def _predict_one(self, window_values: np.ndarray) -> float:
        return float(self._decision(window_values[None, :])[0])

    def _predict_series(self, series: np.ndarray, start: int) -> np.ndarray:
        rows = np.lib.stride_tricks.sliding_window_view(series, self.window)
        return self._decision(rows[start - self.window : series.shape[0] - self.window])

    def hyperparams(self) -> dict:
        return {
            "window": self.window,
            "n_stages": self.n_stages,
            "shrinkage": self.shrinkage,
        }

    def state(self) -> dict:
        self._require_fitted()
        return {
            "intercept": self.intercept_,
            "features": self.features_.tolist(),
            "thresholds": self.thresholds_.tolist(),
            "left_values": self.left_values_.tolist(),
            "right_values": self.right_values_.tolist(),
            "train_mse_path": self.train_mse_path_.tolist(),
        }

    def _restore(self, state: dict) -> None:
        self.intercept_ = float(state["intercept"])
        self.features_ = np.asarray(state["features"], dtype=np.int64)
        self.thresholds_ = np.asarray(state["thresholds"], dtype=np.float64)
        self.left_values_ = np.asarray(state["left_values"], dtype=np.float64)
        self.right_values_ = np.asarray(state["right_values"], dtype=np.float64)
        self.train_mse_path_ = np.asarray(state["train_mse_path"], dtype=np.float64)
        lengths = {
            self.features_.shape[0],
            self.thresholds_.shape[0],
            self.left_values_.shape[0],
            self.right_values_.shape[0],
        }
        if len(lengths) != 1:
            raise ConfigError("stored stump arrays have mismatched lengths")
