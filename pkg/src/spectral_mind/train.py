"""Softmax cross-entropy, SGD with momentum, stratified splits and the early-stopping loop.

Randomness: every run seed feeds a ``numpy.random.SeedSequence`` (PCG64) that is
spawned into three independent child streams, in this order: weight
initialisation, per-epoch shuffling, dropout masks.  Splits use their own
``default_rng(seed)``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .eegio import SpectrogramSet
from .nn.network import Network

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 64
    max_epochs: int = 50
    val_frequency_iters: int = 8
    val_patience: int = 20
    seed: int = 0
    shuffle: bool = True

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate: must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum: must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size: must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs: must be >= 1")
        if self.val_frequency_iters < 1:
            raise ValueError("val_frequency_iters: must be >= 1")
        if self.val_patience < 1:
            raise ValueError("val_patience: must be >= 1")
        if self.seed < 0:
            raise ValueError("seed: must be a non-negative integer")


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(3)
    return {name: np.random.Generator(np.random.PCG64(ss))
            for name, ss in zip(("init", "shuffle", "dropout"), children)}


def cross_entropy(probs: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the pre-softmax logits."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = probs.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k})")
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def sgdm_step(params, grads, velocities, lr: float, momentum: float):
    """In-place update ``v = momentum * v + g``; ``p = p - lr * v``."""
    for p, g, v in zip(params, grads, velocities):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, velocity {v.shape}")
        v *= momentum
        v += g
        p -= lr * v
    return params, velocities


class SGDM:
    def __init__(self, net: Network, lr: float, momentum: float):
        self.net = net
        self.lr = lr
        self.momentum = momentum
        self.velocities = [np.zeros_like(p) for _, _, p in net.parameters()]

    def step(self) -> None:
        params, grads = [], []
        for i, name, p in self.net.parameters():
            params.append(p)
            grads.append(self.net.layers[i].grads[name])
        sgdm_step(params, grads, self.velocities, self.lr, self.momentum)


@dataclass
class SplitSet:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def _largest_remainder(n: int, ratios) -> list[int]:
    exact = [n * r for r in ratios]
    counts = [math.floor(e + 1e-9) for e in exact]
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split_dataset(ds: SpectrogramSet, ratios=(0.70, 0.15, 0.15), seed: int = 0) -> SplitSet:
    """Stratified by (subject, label): each stratum is shuffled and cut 70/15/15."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three fractions summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    strata: dict[tuple[str, str], list[int]] = {}
    for i, m in enumerate(ds.meta):
        strata.setdefault((m.subject_id, m.label), []).append(i)
    parts: tuple[list, list, list] = ([], [], [])
    for key in sorted(strata):
        idx = np.array(strata[key], dtype=np.int64)
        if len(idx) < 3:
            raise ValueError(f"stratum {key} has {len(idx)} samples; need at least 3")
        idx = idx[rng.permutation(len(idx))]
        n_tr, n_va, _ = _largest_remainder(len(idx), ratios)
        parts[0].extend(idx[:n_tr])
        parts[1].extend(idx[n_tr : n_tr + n_va])
        parts[2].extend(idx[n_tr + n_va :])
    return SplitSet(*(np.array(sorted(p), dtype=np.int64) for p in parts))


class EarlyStopping:
    """Counts consecutive validation checks that fail to strictly improve the best loss."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.bad_checks = 0

    def update(self, val_loss: float) -> tuple[bool, bool]:
        """Returns ``(improved, should_stop)``."""
        if val_loss < self.best:
            self.best = val_loss
            self.bad_checks = 0
            return True, False
        self.bad_checks += 1
        return False, self.bad_checks >= self.patience


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    validations: list[tuple[int, float, float]] = field(default_factory=list)
    stop_reason: str = ""
    best_iteration: int = 0

    @property
    def iterations(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path) -> None:
        by_iter = {it: (vl, va) for it, vl, va in self.validations}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "train_loss", "val_loss", "val_acc"])
            for it, loss in enumerate(self.train_loss, start=1):
                vl, va = by_iter.get(it, ("", ""))
                w.writerow([it, repr(loss), repr(vl) if vl != "" else "", repr(va) if va != "" else ""])


def network_inputs(net: Network, images: np.ndarray) -> np.ndarray:
    """Shape ``[N, H, W]`` images for the network: a channel axis for CNNs, as-is for sequences."""
    if len(net.input_shape) == 3:
        x = images[:, None, :, :]
    else:
        x = images
    if tuple(x.shape[1:]) != net.input_shape:
        raise ValueError(
            f"network expects per-sample input {list(net.input_shape)}, dataset provides {list(x.shape[1:])}"
        )
    return x


def predict_proba(net: Network, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    mode = net.mode
    net.eval()
    x = network_inputs(net, images)
    out = [net.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    net.mode = mode
    return np.concatenate(out, axis=0) if out else np.zeros((0, 0))


def evaluate_loss(net: Network, images: np.ndarray, labels: np.ndarray, batch_size: int = 64):
    probs = predict_proba(net, images, batch_size)
    loss, _ = cross_entropy(probs, labels)
    acc = float((probs.argmax(axis=1) == labels).mean())
    return loss, acc


def train_model(net: Network, ds: SpectrogramSet, split: SplitSet, cfg: TrainConfig | None = None,
                dropout_rng: np.random.Generator | None = None,
                shuffle_rng: np.random.Generator | None = None) -> tuple[Network, TrainHistory]:
    """Mini-batch SGDM with periodic validation, patience-based stopping and best-weight restore."""
    cfg = cfg or TrainConfig()
    cfg.validate()
    if len(split.train) == 0 or len(split.val) == 0:
        raise ValueError("training and validation splits must both be non-empty")
    streams = rng_streams(cfg.seed)
    shuffle_rng = shuffle_rng or streams["shuffle"]
    net.seed_dropout(dropout_rng or streams["dropout"])

    labels = ds.labels
    x_train = network_inputs(net, ds.images[split.train])
    y_train = labels[split.train]
    x_val, y_val = ds.images[split.val], labels[split.val]
    network_inputs(net, x_val[:1])

    opt = SGDM(net, cfg.learning_rate, cfg.momentum)
    stopper = EarlyStopping(cfg.val_patience)
    history = TrainHistory()
    best_weights = None
    n = len(x_train)
    iteration = 0
    stop = False
    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            net.train()
            probs = net.forward(x_train[batch])
            loss, grad = cross_entropy(probs, y_train[batch])
            net.backward(grad, from_logits=True, need_input_grad=False)
            opt.step()
            iteration += 1
            history.train_loss.append(loss)
            if iteration % cfg.val_frequency_iters == 0:
                val_loss, val_acc = evaluate_loss(net, x_val, y_val, cfg.batch_size)
                history.validations.append((iteration, val_loss, val_acc))
                improved, stop = stopper.update(val_loss)
                if improved:
                    best_weights = net.get_weights()
                    history.best_iteration = iteration
                if stop:
                    history.stop_reason = "patience_exhausted"
                    break
        log.debug("epoch %d done at iteration %d", epoch + 1, iteration)
        if stop:
            break
    if not stop:
        history.stop_reason = "max_epochs"
    if best_weights is not None:
        net.set_weights(best_weights)
    else:
        history.best_iteration = iteration
    net.eval()
    return net, history
