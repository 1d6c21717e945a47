"""Neural one-step forecasters trained by full-batch gradient descent.

Both models map a window of past values to the next value. Inputs and
labels are z-scored with constants computed from the pre-validation part
of the training windows; the last ``val_fraction`` of windows is held out,
and the parameters with the best held-out loss over the training run are
kept. Training uses classical momentum and raises FitDivergenceError if
the loss or gradient becomes non-finite.

``loss_and_grad`` and ``param_vector`` are exposed so the analytic
gradients can be checked against finite differences.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, FitDivergenceError, InsufficientDataError
from .base import DEFAULT_WINDOW, Predictor, register_predictor, sliding_windows


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class GradientTrainedPredictor(Predictor):
    """Shared training loop; subclasses define the parameter vector layout,
    the forward pass, and the analytic gradient."""

    def __init__(
        self,
        hidden: int = 8,
        epochs: int = 500,
        learning_rate: float = 0.01,
        momentum: float = 0.9,
        val_fraction: float = 0.2,
        seed: int = 0,
        window: int = DEFAULT_WINDOW,
    ):
        super().__init__(window=window)
        hidden, epochs, seed = int(hidden), int(epochs), int(seed)
        if hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {hidden}")
        if epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {epochs}")
        if not learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {learning_rate}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        if not 0.0 < val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0, 1), got {val_fraction}")
        self.hidden = hidden
        self.epochs = epochs
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.val_fraction = float(val_fraction)
        self.seed = seed

    def min_train_length(self) -> int:
        return self.window + 2

    # -- subclass contract ----------------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _forward(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Predictions for standardized inputs of shape (n, window)."""
        raise NotImplementedError

    def loss_and_grad(self, params, inputs, labels) -> tuple[float, np.ndarray]:
        """Mean squared error and its gradient on standardized data."""
        raise NotImplementedError

    def param_vector(self) -> np.ndarray:
        raise NotImplementedError

    def _set_param_vector(self, params: np.ndarray) -> None:
        raise NotImplementedError

    # -- training ---------------------------------------------------------------

    def _fit(self, series: np.ndarray) -> None:
        inputs, labels = sliding_windows(series, self.window)
        n = labels.shape[0]
        n_val = max(1, int(round(self.val_fraction * n)))
        split = n - n_val
        if split < 1:
            raise InsufficientDataError(
                f"{n} windows cannot be split into training and validation parts"
            )
        mean = float(inputs[:split].mean())
        scale = float(inputs[:split].std())
        if scale < 1e-12:
            scale = 1.0
        self.input_mean_ = mean
        self.input_scale_ = scale
        x = (inputs - mean) / scale
        y = (labels - mean) / scale
        x_tr, y_tr = x[:split], y[:split]
        x_val, y_val = x[split:], y[split:]

        params = self._init_params(np.random.default_rng(self.seed))
        velocity = np.zeros_like(params)
        best = params.copy()
        best_val = self._val_loss(params, x_val, y_val)
        for epoch in range(self.epochs):
            loss, grad = self.loss_and_grad(params, x_tr, y_tr)
            if not (np.isfinite(loss) and np.isfinite(grad).all()):
                raise FitDivergenceError(
                    f"{self.kind} training produced a non-finite loss or "
                    f"gradient at epoch {epoch}"
                )
            velocity = self.momentum * velocity - self.learning_rate * grad
            params = params + velocity
            val = self._val_loss(params, x_val, y_val)
            if val < best_val:
                best_val = val
                best = params.copy()
        self._set_param_vector(best)
        self.val_loss_ = float(best_val)

    def _val_loss(self, params, x_val, y_val) -> float:
        val = float(np.mean((self._forward(params, x_val) - y_val) ** 2))
        if not np.isfinite(val):
            raise FitDivergenceError(
                f"{self.kind} validation loss became non-finite"
            )
        return val

    # -- prediction ---------------------------------------------------------------

    def _predict_one(self, window_values: np.ndarray) -> float:
        x = (window_values[None, :] - self.input_mean_) / self.input_scale_
        yhat = self._forward(self.param_vector(), x)
        return float(self.input_mean_ + self.input_scale_ * yhat[0])

    def _predict_series(self, series: np.ndarray, start: int) -> np.ndarray:
        rows = np.lib.stride_tricks.sliding_window_view(series, self.window)
        rows = rows[start - self.window : series.shape[0] - self.window]
        x = (rows - self.input_mean_) / self.input_scale_
        yhat = self._forward(self.param_vector(), x)
        return self.input_mean_ + self.input_scale_ * yhat

    def hyperparams(self) -> dict:
        return {
            "window": self.window,
            "hidden": self.hidden,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "val_fraction": self.val_fraction,
            "seed": self.seed,
        }


@register_predictor
class FfnnPredictor(GradientTrainedPredictor):
    """Single-hidden-layer network: window -> sigmoid(hidden) -> linear."""

    kind = "ffnn"

    def _init_params(self, rng: np.random.Generator) -> np.ndarray:
        w, h = self.window, self.hidden
        w1 = rng.normal(0.0, 1.0, (w, h)) / np.sqrt(w)
        b1 = np.zeros(h)
        w2 = rng.normal(0.0, 1.0, h) / np.sqrt(h)
        b2 = np.zeros(1)
        return np.concatenate([w1.ravel(), b1, w2, b2])

    def _unpack(self, params: np.ndarray):
        w, h = self.window, self.hidden
        k = w * h
        w1 = params[:k].reshape(w, h)
        b1 = params[k : k + h]
        w2 = params[k + h : k + 2 * h]
        b2 = params[k + 2 * h]
        return w1, b1, w2, b2

    def _forward(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2 = self._unpack(params)
        hidden = _sigmoid(inputs @ w1 + b1)
        return hidden @ w2 + b2

    def loss_and_grad(self, params, inputs, labels) -> tuple[float, np.ndarray]:
        w1, b1, w2, b2 = self._unpack(params)
        n = labels.shape[0]
        hidden = _sigmoid(inputs @ w1 + b1)
        preds = hidden @ w2 + b2
        err = preds - labels
        loss = float(err @ err) / n
        d_out = 2.0 * err / n
        d_w2 = hidden.T @ d_out
        d_b2 = float(d_out.sum())
        d_hidden = np.outer(d_out, w2) * hidden * (1.0 - hidden)
        d_w1 = inputs.T @ d_hidden
        d_b1 = d_hidden.sum(axis=0)
        grad = np.concatenate([d_w1.ravel(), d_b1, d_w2, [d_b2]])
        return loss, grad

    def param_vector(self) -> np.ndarray:
        self._require_fitted()
        return np.concatenate(
            [self.w1_.ravel(), self.b1_, self.w2_, [self.b2_]]
        )

    def _set_param_vector(self, params: np.ndarray) -> None:
        w1, b1, w2, b2 = self._unpack(params)
        self.w1_ = w1.copy()
        self.b1_ = b1.copy()
        self.w2_ = w2.copy()
        self.b2_ = float(b2)

    def state(self) -> dict:
        self._require_fitted()
        return {
            "w1": self.w1_.tolist(),
            "b1": self.b1_.tolist(),
            "w2": self.w2_.tolist(),
            "b2": self.b2_,
            "input_mean": self.input_mean_,
            "input_scale": self.input_scale_,
            "val_loss": getattr(self, "val_loss_", None),
        }

    def _restore(self, state: dict) -> None:
        self.w1_ = np.asarray(state["w1"], dtype=np.float64)
        self.b1_ = np.asarray(state["b1"], dtype=np.float64)
        self.w2_ = np.asarray(state["w2"], dtype=np.float64)
        self.b2_ = float(state["b2"])
        if self.w1_.shape != (self.window, self.hidden):
            raise ConfigError("stored network weights do not match the declared shape")
        self.input_mean_ = float(state["input_mean"])
        self.input_scale_ = float(state["input_scale"])
        if state.get("val_loss") is not None:
            self.val_loss_ = float(state["val_loss"])


@register_predictor
class LstmPredictor(GradientTrainedPredictor):
    """Single LSTM cell consuming the window one value per step, with a
    linear readout of the final hidden state. Gate order in the packed
    weight arrays is (input, forget, cell, output); the forget-gate bias
    starts at +1 so early training does not wipe the cell state."""

    kind = "lstm"

    def _init_params(self, rng: np.random.Generator) -> np.ndarray:
        h = self.hidden
        wx = rng.normal(0.0, 1.0, 4 * h) / np.sqrt(1.0 + h)
        wh = rng.normal(0.0, 1.0, (h, 4 * h)) / np.sqrt(1.0 + h)
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0
        v = rng.normal(0.0, 1.0, h) / np.sqrt(h)
        b_out = np.zeros(1)
        return np.concatenate([wx, wh.ravel(), b, v, b_out])

    def _unpack(self, params: np.ndarray):
        h = self.hidden
        o = 0
        wx = params[o : o + 4 * h]
        o += 4 * h
        wh = params[o : o + 4 * h * h].reshape(h, 4 * h)
        o += 4 * h * h
        b = params[o : o + 4 * h]
        o += 4 * h
        v = params[o : o + h]
        o += h
        b_out = params[o]
        return wx, wh, b, v, b_out

    def _run_cell(self, params: np.ndarray, inputs: np.ndarray):
        wx, wh, b, v, b_out = self._unpack(params)
        n, w = inputs.shape
        h = self.hidden
        hs = np.zeros((w + 1, n, h))
        cs = np.zeros((w + 1, n, h))
        gates_i = np.empty((w, n, h))
        gates_f = np.empty((w, n, h))
        gates_g = np.empty((w, n, h))
        gates_o = np.empty((w, n, h))
        tanh_c = np.empty((w, n, h))
        for t in range(w):
            z = inputs[:, t : t + 1] * wx[None, :] + hs[t] @ wh + b
            gi = _sigmoid(z[:, :h])
            gf = _sigmoid(z[:, h : 2 * h])
            gg = np.tanh(z[:, 2 * h : 3 * h])
            go = _sigmoid(z[:, 3 * h :])
            c = gf * cs[t] + gi * gg
            tc = np.tanh(c)
            gates_i[t], gates_f[t], gates_g[t], gates_o[t] = gi, gf, gg, go
            cs[t + 1] = c
            tanh_c[t] = tc
            hs[t + 1] = go * tc
        preds = hs[w] @ v + b_out
        cache = (hs, cs, gates_i, gates_f, gates_g, gates_o, tanh_c)
        return preds, cache

    def _forward(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        return self._run_cell(params, inputs)[0]

    def loss_and_grad(self, params, inputs, labels) -> tuple[float, np.ndarray]:
        wx, wh, b, v, b_out = self._unpack(params)
        n, w = inputs.shape
        h = self.hidden
        preds, cache = self._run_cell(params, inputs)
        hs, cs, gates_i, gates_f, gates_g, gates_o, tanh_c = cache
        err = preds - labels
        loss = float(err @ err) / n
        d_out = 2.0 * err / n
        d_v = hs[w].T @ d_out
        d_b_out = float(d_out.sum())
        d_h = np.outer(d_out, v)
        d_c = np.zeros((n, h))
        d_wx = np.zeros(4 * h)
        d_wh = np.zeros((h, 4 * h))
        d_b = np.zeros(4 * h)
        dz = np.empty((n, 4 * h))
        for t in range(w - 1, -1, -1):
            gi, gf = gates_i[t], gates_f[t]
            gg, go = gates_g[t], gates_o[t]
            tc = tanh_c[t]
            d_c = d_c + d_h * go * (1.0 - tc * tc)
            dz[:, :h] = d_c * gg * gi * (1.0 - gi)
            dz[:, h : 2 * h] = d_c * cs[t] * gf * (1.0 - gf)
            dz[:, 2 * h : 3 * h] = d_c * gi * (1.0 - gg * gg)
            dz[:, 3 * h :] = d_h * tc * go * (1.0 - go)
            d_wx += inputs[:, t] @ dz
            d_wh += hs[t].T @ dz
            d_b += dz.sum(axis=0)
            d_h = dz @ wh.T
            d_c = d_c * gf
        grad = np.concatenate([d_wx, d_wh.ravel(), d_b, d_v, [d_b_out]])
        return loss, grad

    def param_vector(self) -> np.ndarray:
        self._require_fitted()
        return np.concatenate(
            [self.wx_, self.wh_.ravel(), self.b_, self.v_, [self.b_out_]]
        )

    def _set_param_vector(self, params: np.ndarray) -> None:
        wx, wh, b, v, b_out = self._unpack(params)
        self.wx_ = wx.copy()
        self.wh_ = wh.copy()
        self.b_ = b.copy()
        self.v_ = v.copy()
        self.b_out_ = float(b_out)

    def state(self) -> dict:
        self._require_fitted()
        return {
            "wx": self.wx_.tolist(),
            "wh": self.wh_.tolist(),
            "b": self.b_.tolist(),
            "v": self.v_.tolist(),
            "b_out": self.b_out_,
            "input_mean": self.input_mean_,
            "input_scale": self.input_scale_,
            "val_loss": getattr(self, "val_loss_", None),
        }

    def _restore(self, state: dict) -> None:
        self.wx_ = np.asarray(state["wx"], dtype=np.float64)
        self.wh_ = np.asarray(state["wh"], dtype=np.float64)
        self.b_ = np.asarray(state["b"], dtype=np.float64)
        self.v_ = np.asarray(state["v"], dtype=np.float64)
        self.b_out_ = float(state["b_out"])
        if self.wh_.shape != (self.hidden, 4 * self.hidden):
            raise ConfigError("stored cell weights do not match the declared shape")
        self.input_mean_ = float(state["input_mean"])
        self.input_scale_ = float(state["input_scale"])
        if state.get("val_loss") is not None:
            self.val_loss_ = float(state["val_loss"])
