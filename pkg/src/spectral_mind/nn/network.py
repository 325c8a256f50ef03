"""Sequential network container, the two model builders, and checkpoint I/O."""
from __future__ import annotations

import copy

import numpy as np

from ..eegio import NETWORK_MAGIC, FormatError, read_container, write_container
from .layers import (LSTM, BatchNorm2D, Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D,
                     ReLU, Softmax)


class Network:
    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...], architecture: dict | None = None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)  # per-sample shape, batch dimension excluded
        self.architecture = architecture or {"builder": "custom"}
        self.mode = "infer"
        self._forwarded = False

    @property
    def training(self) -> bool:
        return self.mode == "train"

    def train(self) -> Network:
        self.mode = "train"
        return self

    def eval(self) -> Network:
        self.mode = "infer"
        return self

    def seed_dropout(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = rng

    def forward(self, x: np.ndarray) -> np.ndarray:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(
                f"input shape {list(x.shape[1:])} does not match network input {list(self.input_shape)}"
            )
        x = x.astype(self.dtype, copy=False)
        for layer in self.layers:
            x = layer.forward(x, train=self.training)
        self._forwarded = True
        return x

    __call__ = forward

    def backward(self, dy: np.ndarray, accumulate: bool = False, from_logits: bool = False,
                 need_input_grad: bool = True) -> np.ndarray | None:
        """Backpropagate ``dy``; returns the gradient w.r.t. the network input.

        With ``from_logits`` the gradient is taken to be w.r.t. the input of a
        final Softmax layer (fused softmax + cross-entropy), so that layer is skipped.
        """
        if not self._forwarded:
            raise RuntimeError("backward called before forward")
        layers = self.layers
        if from_logits:
            if not layers or not isinstance(layers[-1], Softmax):
                raise ValueError("from_logits requires a final Softmax layer")
            layers = layers[:-1]
        dy = dy.astype(self.dtype, copy=False)
        for i in range(len(layers) - 1, -1, -1):
            layer = layers[i]
            if i == 0 and not need_input_grad and isinstance(layer, Conv2D):
                layer.backward(dy, accumulate=accumulate, need_input_grad=False)
                return None
            dy = layer.backward(dy, accumulate=accumulate)
        return dy

    @property
    def dtype(self):
        for layer in self.layers:
            for p in layer.params.values():
                return p.dtype
        return np.dtype(np.float64)

    def parameters(self):
        """Yield ``(layer_index, name, param_array)`` in a fixed order."""
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.params[name]

    def get_weights(self) -> list[np.ndarray]:
        out = [p.copy() for _, _, p in self.parameters()]
        for layer in self.layers:
            out.extend(layer.state[k].copy() for k in sorted(layer.state))
        return out

    def set_weights(self, weights: list[np.ndarray]) -> None:
        it = iter(weights)
        for i, name, p in list(self.parameters()):
            self.layers[i].params[name] = next(it).copy()
        for layer in self.layers:
            for k in sorted(layer.state):
                layer.state[k] = next(it).copy()

    def clone(self) -> Network:
        return copy.deepcopy(self)

    def __repr__(self):
        body = "\n".join(f"  {layer!r}" for layer in self.layers)
        return f"Network(input={list(self.input_shape)}, mode={self.mode})[\n{body}\n]"


def count_parameters(net: Network) -> int:
    """Trainable parameter count; BatchNorm running statistics are not included."""
    return int(sum(p.size for _, _, p in net.parameters()))


def _finish(layers, input_shape, architecture, rng, dtype) -> Network:
    rng = rng if rng is not None else np.random.default_rng(0)
    for layer in layers:
        layer.init_params(rng, dtype)
    return Network(layers, input_shape, architecture)


def build_shallow_cnn(input_h: int, input_w: int, n_classes: int = 2, rng=None, dtype=np.float32,
                      filters: int = 10) -> Network:
    """Two conv blocks (3x3, 10 filters, same padding, BN, ReLU) joined by 2x2 max pooling."""
    if input_h % 2 or input_w % 2:
        raise ValueError(f"input dims must be even for 2x2 pooling, got {input_h}x{input_w}")
    if input_h < 2 or input_w < 2 or n_classes < 1:
        raise ValueError("input dims must be >= 2 and n_classes >= 1")
    layers = [
        Conv2D(1, filters, 3), BatchNorm2D(filters), ReLU(),
        MaxPool2D(),
        Conv2D(filters, filters, 3), BatchNorm2D(filters), ReLU(),
        Flatten(),
        Dense(filters * (input_h // 2) * (input_w // 2), n_classes),
        Softmax(),
    ]
    arch = {"builder": "shallow_cnn",
            "args": {"input_h": input_h, "input_w": input_w, "n_classes": n_classes, "filters": filters}}
    return _finish(layers, (1, input_h, input_w), arch, rng, dtype)


def build_lstm_classifier(T: int, D: int, n_classes: int = 2, rng=None, dtype=np.float32,
                          hidden: tuple[int, int] = (256, 128), dropout: float = 0.5) -> Network:
    if T < 1 or D < 1 or n_classes < 1:
        raise ValueError("T, D and n_classes must be >= 1")
    h1, h2 = hidden
    layers = [
        LSTM(D, h1, return_sequences=True), Dropout(dropout),
        LSTM(h1, h2, return_sequences=False), Dropout(dropout),
        Dense(h2, n_classes),
        Softmax(),
    ]
    arch = {"builder": "lstm",
            "args": {"T": T, "D": D, "n_classes": n_classes, "hidden": list(hidden), "dropout": dropout}}
    return _finish(layers, (T, D), arch, rng, dtype)


BUILDERS = {"shallow_cnn": build_shallow_cnn, "lstm": build_lstm_classifier}


def build_from_architecture(arch: dict, rng=None, dtype=np.float32) -> Network:
    try:
        builder = BUILDERS[arch["builder"]]
    except KeyError:
        raise FormatError(f"unknown network builder {arch.get('builder')!r}") from None
    args = dict(arch.get("args", {}))
    if "hidden" in args:
        args["hidden"] = tuple(args["hidden"])
    return builder(**args, rng=rng, dtype=dtype)


def save_checkpoint(net: Network, path) -> None:
    tensors, chunks = [], []
    for i, layer in enumerate(net.layers):
        for group, store in (("params", layer.params), ("state", layer.state)):
            for name in sorted(store):
                arr = store[name]
                tensors.append({"layer": i, "kind": layer.kind, "group": group,
                                "name": name, "shape": list(arr.shape)})
                chunks.append(np.asarray(arr, dtype=np.float32).ravel())
    payload = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.float32)
    header = {"kind": "network", "architecture": net.architecture,
              "input_shape": list(net.input_shape), "tensors": tensors}
    write_container(path, NETWORK_MAGIC, header, payload)


def load_checkpoint(path) -> Network:
    header, payload = read_container(path, NETWORK_MAGIC)
    net = build_from_architecture(header["architecture"])
    offset = 0
    for t in header["tensors"]:
        layer = net.layers[t["layer"]]
        if layer.kind != t["kind"]:
            raise FormatError(f"{path}: tensor {t['name']} expects layer {t['kind']}, found {layer.kind}")
        size = int(np.prod(t["shape"]))
        arr = payload[offset : offset + size].reshape(t["shape"]).copy()
        offset += size
        getattr(layer, t["group"])[t["name"]] = arr
    if offset != payload.size:
        raise FormatError(f"{path}: payload has {payload.size - offset} unread values")
    return net


def load_weights_into(net: Network, path) -> Network:
    """Initialise ``net`` from a checkpoint, refusing any architecture or shape mismatch."""
    src = load_checkpoint(path)
    got, want = src.architecture.get("builder"), net.architecture.get("builder")
    if len(src.layers) != len(net.layers) or got != want:
        raise ValueError(
            f"shape mismatch: checkpoint holds a {got!r} network ({len(src.layers)} layers, input "
            f"{list(src.input_shape)}), target is {want!r} ({len(net.layers)} layers, input "
            f"{list(net.input_shape)})"
        )
    for i, (a, b) in enumerate(zip(src.layers, net.layers)):
        for name, p in b.params.items():
            q = a.params.get(name)
            if a.kind != b.kind or q is None or q.shape != p.shape:
                shape = None if q is None else list(q.shape)
                raise ValueError(f"shape mismatch at layer {i} ({b.kind}.{name}): "
                                 f"checkpoint {a.kind} {shape} vs network {list(p.shape)}")
    for a, b in zip(src.layers, net.layers):
        b.params = {k: v.astype(net.dtype) for k, v in a.params.items()}
        b.state = {k: v.astype(net.dtype) for k, v in a.state.items()}
    return net
