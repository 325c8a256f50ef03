"""Layers with explicit forward/backward passes.

Arrays are laid out as N x C x H x W for images and N x T x D for sequences.
Each layer caches what its backward pass needs during ``forward``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    kind = "Layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self._cache = None

    def init_params(self, rng: np.random.Generator, dtype) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray, accumulate: bool = False) -> np.ndarray:
        raise NotImplementedError

    def _store_grad(self, name: str, g: np.ndarray, accumulate: bool) -> None:
        g = g.astype(self.params[name].dtype, copy=False)
        if accumulate and name in self.grads:
            self.grads[name] = self.grads[name] + g
        else:
            self.grads[name] = g

    def _cached(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}: backward called without a cached forward pass")
        return self._cache

    def hyper(self) -> dict:
        return {}

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.hyper().items())
        return f"{self.kind}({args})"


def _he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D(Layer):
    """Stride-1 cross-correlation with 'same' zero padding (odd kernels only)."""

    kind = "Conv2D"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd for same-size padding")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.pad = kernel_size // 2

    def hyper(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size}

    def init_params(self, rng, dtype):
        k = self.kernel_size
        shape = (self.out_channels, self.in_channels, k, k)
        self.params["W"] = _he_uniform(rng, shape, self.in_channels * k * k, dtype)
        self.params["b"] = np.zeros(self.out_channels, dtype=dtype)

    def forward(self, x, train=False):
        W, b = self.params["W"], self.params["b"]
        if x.ndim != 4 or x.shape[1] != W.shape[1]:
            raise ValueError(
                f"Conv2D expects input [N x {W.shape[1]} x H x W], got {list(x.shape)}"
            )
        n, c, h, w = x.shape
        k, p = self.kernel_size, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))  # N, C, H, W, k, k
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)
        out = cols @ W.reshape(len(W), -1).T + b
        self._cache = (cols, x.shape)
        return np.ascontiguousarray(out.reshape(n, h, w, -1).transpose(0, 3, 1, 2))

    def backward(self, dy, accumulate=False, need_input_grad=True):
        cols, (n, c, h, w) = self._cached()
        W = self.params["W"]
        f, k, p = len(W), self.kernel_size, self.pad
        dy2 = dy.transpose(0, 2, 3, 1).reshape(-1, f)
        self._store_grad("W", (dy2.T @ cols).reshape(W.shape), accumulate)
        self._store_grad("b", dy2.sum(axis=0), accumulate)
        if not need_input_grad:
            return None
        dcols = (dy2 @ W.reshape(f, -1)).reshape(n, h, w, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + h, j : j + w] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p : p + h, p : p + w]


class BatchNorm2D(Layer):
    kind = "BatchNorm2D"

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum

    def hyper(self):
        return {"channels": self.channels, "eps": self.eps, "momentum": self.momentum}

    def init_params(self, rng, dtype):
        self.params["gamma"] = np.ones(self.channels, dtype=dtype)
        self.params["beta"] = np.zeros(self.channels, dtype=dtype)
        self.state.clear()

    def forward(self, x, train=False):
        gamma = self.params["gamma"][None, :, None, None]
        beta = self.params["beta"][None, :, None, None]
        if train:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            if m < 2:
                raise ValueError("BatchNorm2D in train mode needs N*H*W >= 2 per channel")
            mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
            var = x.var(axis=(0, 2, 3), dtype=np.float64)
            if not self.state:
                self.state["running_mean"] = mean.astype(x.dtype)
                self.state["running_var"] = var.astype(x.dtype)
            else:
                mo = self.momentum
                self.state["running_mean"] = (mo * self.state["running_mean"] + (1 - mo) * mean).astype(x.dtype)
                self.state["running_var"] = (mo * self.state["running_var"] + (1 - mo) * var).astype(x.dtype)
        else:
            if not self.state:
                raise RuntimeError("BatchNorm2D: inference requested before any running statistics exist")
            mean = self.state["running_mean"].astype(np.float64)
            var = self.state["running_var"].astype(np.float64)
        inv_std = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        xhat = (x - mean.astype(x.dtype)[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, train)
        return gamma * xhat + beta

    def backward(self, dy, accumulate=False):
        xhat, inv_std, train = self._cached()
        gamma = self.params["gamma"]
        self._store_grad("gamma", (dy * xhat).sum(axis=(0, 2, 3), dtype=np.float64), accumulate)
        self._store_grad("beta", dy.sum(axis=(0, 2, 3), dtype=np.float64), accumulate)
        dxhat = dy * gamma[None, :, None, None]
        if not train:
            return dxhat * inv_std[None, :, None, None]
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3), dtype=np.float64).astype(dy.dtype)[None, :, None, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(dy.dtype)[None, :, None, None]
        return (inv_std[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, train=False):
        y = np.maximum(x, 0)
        self._cache = y
        return y

    def backward(self, dy, accumulate=False):
        return dy * (self._cached() > 0)


class MaxPool2D(Layer):
    """2x2 max pooling with stride 2; gradient goes to the first maximum of each window."""

    kind = "MaxPool2D"

    @staticmethod
    def _quads(x):
        return (x[:, :, 0::2, 0::2], x[:, :, 0::2, 1::2], x[:, :, 1::2, 0::2], x[:, :, 1::2, 1::2])

    def forward(self, x, train=False):
        h, w = x.shape[2:]
        if h % 2 or w % 2:
            raise ValueError(f"MaxPool2D needs even spatial dims, got {h}x{w}")
        q = self._quads(x)
        out = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
        taken = np.zeros(out.shape, dtype=bool)
        masks = []
        for quad in q:
            m = (quad == out) & ~taken
            taken |= m
            masks.append(m)
        self._cache = (masks, x.shape)
        return out

    def backward(self, dy, accumulate=False):
        masks, shape = self._cached()
        dx = np.zeros(shape, dtype=dy.dtype)
        for view, m in zip(self._quads(dx), masks):
            view[...] = dy * m
        return dx


class Flatten(Layer):
    kind = "Flatten"

    def forward(self, x, train=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, accumulate=False):
        return dy.reshape(self._cached())


class Dense(Layer):
    kind = "Dense"

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features

    def hyper(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def init_params(self, rng, dtype):
        self.params["W"] = _he_uniform(rng, (self.out_features, self.in_features), self.in_features, dtype)
        self.params["b"] = np.zeros(self.out_features, dtype=dtype)

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"Dense expects [N x {self.in_features}], got {list(x.shape)}")
        self._cache = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy, accumulate=False):
        x = self._cached()
        self._store_grad("W", dy.T @ x, accumulate)
        self._store_grad("b", dy.sum(axis=0), accumulate)
        return dy @ self.params["W"]


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x, train=False):
        z = np.exp(x - x.max(axis=1, keepdims=True))
        y = z / z.sum(axis=1, keepdims=True)
        self._cache = y
        return y

    def backward(self, dy, accumulate=False):
        y = self._cached()
        return y * (dy - (dy * y).sum(axis=1, keepdims=True))


class Dropout(Layer):
    """Inverted dropout; identity at inference.

    Set ``fixed_mask`` to reuse one mask across forward calls (gradient checks).
    """

    kind = "Dropout"

    def __init__(self, rate: float = 0.5):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(0)
        self.fixed_mask: np.ndarray | None = None

    def hyper(self):
        return {"rate": self.rate}

    def forward(self, x, train=False):
        if not train or self.rate == 0:
            self._cache = None
            return x
        if self.fixed_mask is not None:
            mask = self.fixed_mask
        else:
            keep = self.rng.random(x.shape) >= self.rate
            mask = (keep / (1.0 - self.rate)).astype(x.dtype)
        self._cache = mask
        return x * mask

    def backward(self, dy, accumulate=False):
        return dy if self._cache is None else dy * self._cache


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LSTM(Layer):
    """Single LSTM layer, gate order (input, forget, cell, output), zero initial state."""

    kind = "LSTM"

    def __init__(self, input_size: int, hidden_size: int, return_sequences: bool = True):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.return_sequences = return_sequences

    def hyper(self):
        return {"input_size": self.input_size, "hidden_size": self.hidden_size,
                "return_sequences": self.return_sequences}

    def init_params(self, rng, dtype):
        d, h = self.input_size, self.hidden_size
        self.params["W_x"] = _glorot_uniform(rng, (4 * h, d), d, 4 * h, dtype)
        self.params["W_h"] = _glorot_uniform(rng, (4 * h, h), h, 4 * h, dtype)
        b = np.zeros(4 * h, dtype=dtype)
        b[h : 2 * h] = 1.0  # forget gate
        self.params["b"] = b

    def forward(self, x, train=False):
        n, t_len, d = x.shape
        if t_len == 0:
            raise ValueError("LSTM needs at least one time step")
        if d != self.input_size:
            raise ValueError(f"LSTM expects input size {self.input_size}, got {d}")
        hs = self.hidden_size
        W_h = self.params["W_h"]
        xa = x @ self.params["W_x"].T + self.params["b"]  # N, T, 4H
        gates = np.empty_like(xa)
        cells = np.empty((n, t_len, hs), dtype=x.dtype)
        hidden = np.empty((n, t_len, hs), dtype=x.dtype)
        h = np.zeros((n, hs), dtype=x.dtype)
        c = np.zeros((n, hs), dtype=x.dtype)
        for t in range(t_len):
            a = xa[:, t] + h @ W_h.T
            g = gates[:, t]
            g[:, : 2 * hs] = _sigmoid(a[:, : 2 * hs])
            g[:, 2 * hs : 3 * hs] = np.tanh(a[:, 2 * hs : 3 * hs])
            g[:, 3 * hs :] = _sigmoid(a[:, 3 * hs :])
            c = g[:, hs : 2 * hs] * c + g[:, :hs] * g[:, 2 * hs : 3 * hs]
            h = g[:, 3 * hs :] * np.tanh(c)
            cells[:, t] = c
            hidden[:, t] = h
        self._cache = (x, gates, cells, hidden)
        return hidden if self.return_sequences else hidden[:, -1]

    def backward(self, dy, accumulate=False):
        x, gates, cells, hidden = self._cached()
        n, t_len, _ = x.shape
        hs = self.hidden_size
        W_h = self.params["W_h"]
        if self.return_sequences:
            dh_out = dy
        else:
            dh_out = np.zeros_like(hidden)
            dh_out[:, -1] = dy
        da_all = np.empty_like(gates)
        dh_next = np.zeros((n, hs), dtype=x.dtype)
        dc_next = np.zeros((n, hs), dtype=x.dtype)
        for t in range(t_len - 1, -1, -1):
            g = gates[:, t]
            i, f, gg, o = g[:, :hs], g[:, hs : 2 * hs], g[:, 2 * hs : 3 * hs], g[:, 3 * hs :]
            c_prev = cells[:, t - 1] if t > 0 else np.zeros_like(dc_next)
            tc = np.tanh(cells[:, t])
            dh = dh_out[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            da = da_all[:, t]
            da[:, :hs] = dc * gg * i * (1.0 - i)
            da[:, hs : 2 * hs] = dc * c_prev * f * (1.0 - f)
            da[:, 2 * hs : 3 * hs] = dc * i * (1.0 - gg * gg)
            da[:, 3 * hs :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = da @ W_h
        h_prev = np.concatenate([np.zeros((n, 1, hs), dtype=x.dtype), hidden[:, :-1]], axis=1)
        flat_da = da_all.reshape(-1, 4 * hs)
        self._store_grad("W_x", flat_da.T @ x.reshape(-1, x.shape[2]), accumulate)
        self._store_grad("W_h", flat_da.T @ h_prev.reshape(-1, hs), accumulate)
        self._store_grad("b", flat_da.sum(axis=0), accumulate)
        return da_all @ self.params["W_x"]


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, BatchNorm2D, ReLU, MaxPool2D, Flatten, Dense,
                                         Softmax, Dropout, LSTM)}
