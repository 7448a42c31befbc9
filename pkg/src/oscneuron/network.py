"""Dense feed-forward networks with hand-written backpropagation.

A :class:`Network` is an immutable stack of :class:`DenseLayer` values and a
single activation applied after every layer.  Training returns new networks;
internally the per-example loop runs in a compiled kernel that updates a
private copy of the parameters.

Loss is ``½ Σ (z - t)²`` against one-hot targets (or the 0/1 label for a
single output unit).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _accel
from .activation import (
    ActivationKind,
    Oscillator,
    Sigmoid,
    Threshold,
    activation_from_dict,
    activation_to_dict,
)
from .datasets import LabeledDataset
from .kernels import KIND_OSC, KIND_SIG, KIND_THR, sgd_epoch_nb, sgd_epoch_np

logger = logging.getLogger(__name__)

BATCH_MODES = ("per-example", "full-batch")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.biases, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or w.shape[0] != b.shape[0]:
            raise ValueError(f"weights {w.shape} and biases {b.shape} disagree")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Network:
    layers: tuple[DenseLayer, ...]
    activation: ActivationKind = field(default_factory=Oscillator)

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for j in range(1, len(layers)):
            if layers[j].n_in != layers[j - 1].n_out:
                raise ValueError(
                    f"layer {j} expects {layers[j].n_in} inputs but layer {j - 1} gives {layers[j - 1].n_out}"
                )
        object.__setattr__(self, "layers", layers)

    @classmethod
    def initialize(
        cls,
        sizes: Sequence[int],
        activation: ActivationKind,
        rng: np.random.Generator,
        init_range: float | None = None,
    ) -> Network:
        """Uniform ``[-r, r]`` weights and biases.

        ``r`` defaults to ``1.2 / sqrt(fan_in)``, which keeps initial
        pre-activations well inside the oscillator lock range.
        """
        if len(sizes) < 2:
            raise ValueError("sizes must list the input size and at least one layer")
        layers = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            r = 1.2 / math.sqrt(n_in) if init_range is None else init_range
            w = rng.uniform(-r, r, (n_out, n_in))
            b = rng.uniform(-r, r, n_out)
            layers.append(DenseLayer(w, b))
        return cls(tuple(layers), activation)

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)

    def with_params(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]) -> Network:
        return replace(self, layers=tuple(DenseLayer(w, b) for w, b in zip(weights, biases)))


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``grad_cap`` > 0 clips every activation slope to ``[-cap, cap]`` during
    training, and ``output_recovery`` gives output units past the lock edge
    a slope of ``-sign(a) * cap`` so they can re-enter the lock range.  Both
    only change how oscillator networks are trained, never how they are
    evaluated.
    """

    learning_rate: float = 0.05
    epochs: int = 20
    batch_mode: str = "per-example"
    weight_init_range: float | None = None
    seed: int = 0
    grad_cap: float = 0.0
    output_recovery: bool = False

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_mode not in BATCH_MODES:
            raise ValueError(f"batch_mode must be one of {BATCH_MODES}, got {self.batch_mode!r}")
        if self.weight_init_range is not None and not self.weight_init_range > 0:
            raise ValueError("weight_init_range must be > 0")
        if self.grad_cap < 0:
            raise ValueError("grad_cap must be >= 0")
        if self.output_recovery and self.grad_cap <= 0:
            raise ValueError("output_recovery needs grad_cap > 0")


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    per_class: tuple[float, ...]
    loss: float
    epoch: int = 0

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "accuracy": self.accuracy, "per_class": list(self.per_class), "loss": self.loss}


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Outputs for one input vector (or a batch of rows) plus the cache.

    The cache holds ``(layer input, pre-activation)`` for every layer.
    """
    z = np.asarray(x, dtype=np.float64)
    if z.shape[-1] != net.layers[0].n_in:
        raise ValueError(f"input has {z.shape[-1]} features, network expects {net.layers[0].n_in}")
    cache = []
    for layer in net.layers:
        a = z @ layer.weights.T + layer.biases
        cache.append((z, a))
        z = net.activation.z(a)
    return z, cache


def loss(net: Network, x: np.ndarray, target: np.ndarray) -> float:
    z, _ = forward(net, x)
    e = z - np.asarray(target, dtype=np.float64)
    return 0.5 * float(np.sum(e * e))


def backward(
    net: Network,
    cache: list[tuple[np.ndarray, np.ndarray]],
    target: np.ndarray,
    *,
    slope: Callable[[np.ndarray, bool], np.ndarray] | None = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact ``(dL/dW, dL/db)`` per layer; batched caches sum over rows.

    ``slope(a, is_output)`` can replace the activation derivative, which is
    how capped training slopes are injected.
    """
    if isinstance(net.activation, Threshold):
        raise TypeError("threshold networks have no gradient; use perceptron_step")
    if slope is None:
        slope = lambda a, _out: net.activation.dz(a)  # noqa: E731
    z_out = net.activation.z(cache[-1][1])
    delta = (z_out - np.asarray(target, dtype=np.float64)) * slope(cache[-1][1], True)
    grads = []
    for j in range(len(net.layers) - 1, -1, -1):
        z_in, _ = cache[j]
        if delta.ndim == 1:
            gw = np.outer(delta, z_in)
            gb = delta.copy()
        else:
            gw = delta.T @ z_in
            gb = delta.sum(axis=0)
        grads.append((gw, gb))
        if j > 0:
            delta = (delta @ net.layers[j].weights) * slope(cache[j - 1][1], False)
    return grads[::-1]


def sgd_step(net: Network, grads: list[tuple[np.ndarray, np.ndarray]], lr: float) -> Network:
    return net.with_params(
        [layer.weights - lr * gw for layer, (gw, _) in zip(net.layers, grads)],
        [layer.biases - lr * gb for layer, (_, gb) in zip(net.layers, grads)],
    )


def perceptron_step(net: Network, x: np.ndarray, target: np.ndarray, lr: float) -> Network:
    """``w += lr (t - y) x`` for every output unit of a single-layer network."""
    if len(net.layers) != 1:
        raise ValueError("the perceptron rule applies to single-layer networks only")
    x = np.asarray(x, dtype=np.float64)
    y, _ = forward(net, x)
    d = np.asarray(target, dtype=np.float64) - y
    layer = net.layers[0]
    if d.ndim == 1:
        gw, gb = np.outer(d, x), d
    else:
        gw, gb = d.T @ x, d.sum(axis=0)
    return net.with_params([layer.weights + lr * gw], [layer.biases + lr * gb])


# ---------------------------------------------------------------------------
# evaluation and training
# ---------------------------------------------------------------------------


def targets_for(net: Network, labels: np.ndarray) -> np.ndarray:
    """One-hot rows, or the label itself for a single output unit."""
    labels = np.asarray(labels, dtype=np.int64)
    n_out = net.layers[-1].n_out
    if n_out == 1:
        return labels.astype(np.float64)[:, None]
    return np.eye(n_out)[labels]


def predict(net: Network, X: np.ndarray, batch: int = 4096) -> np.ndarray:
    """Class indices; argmax picks the lowest index on ties."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0], dtype=np.int64)
    for lo in range(0, X.shape[0], batch):
        z, _ = forward(net, X[lo : lo + batch])
        out[lo : lo + batch] = classify(z)
    return out


def classify(z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(z)
    if z.shape[1] == 1:
        return (z[:, 0] > 0.5).astype(np.int64)
    return np.argmax(z, axis=1)


def score(pred: np.ndarray, labels: np.ndarray, n_classes: int) -> tuple[float, tuple[float, ...]]:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    acc = float(np.mean(pred == labels)) if labels.size else 0.0
    per = []
    for c in range(n_classes):
        m = labels == c
        per.append(float(np.mean(pred[m] == c)) if m.any() else 0.0)
    return acc, tuple(per)


def evaluate(net: Network, data: LabeledDataset, epoch: int = 0) -> Metrics:
    z, _ = forward(net, data.features)
    e = z - targets_for(net, data.labels)
    acc, per = score(classify(z), data.labels, data.n_classes)
    return Metrics(acc, per, 0.5 * float(np.sum(e * e)) / max(len(data), 1), epoch)


def kernel_kind(act: ActivationKind) -> tuple[int, float]:
    """Integer tag and scalar parameter used by the compiled kernels."""
    if isinstance(act, Oscillator):
        return KIND_OSC, act.rho
    if isinstance(act, Sigmoid):
        return KIND_SIG, act.gain
    return KIND_THR, act.level


def _epoch_params(net: Network):
    ws = [np.array(layer.weights) for layer in net.layers]
    bs = [np.array(layer.biases) for layer in net.layers]
    return ws, bs


def as_typed_list(arrays):
    from numba.typed import List

    out = List()
    for a in arrays:
        out.append(a)
    return out


def _check_finite(value: float, epoch: int) -> None:
    if not math.isfinite(value):
        raise FloatingPointError(
            f"training loss became {value} in epoch {epoch}; lower the learning rate"
        )


def train(
    net: Network,
    data: LabeledDataset,
    cfg: TrainConfig,
    test: LabeledDataset | None = None,
    *,
    on_epoch: Callable[[int, float, Metrics], None] | None = None,
    use_numba: bool | None = None,
) -> tuple[Network, list[Metrics]]:
    """Train and return the final network plus held-out metrics per epoch.

    ``test`` defaults to the training data.  ``on_epoch(epoch, train_loss,
    metrics)`` is called after every epoch.  Per-example mode visits the
    examples in a fresh permutation each epoch drawn from ``cfg.seed``;
    full-batch mode sums gradients over all rows (order-independent).
    Threshold networks use the perceptron rule in either mode.
    """
    if len(data) == 0:
        raise ValueError("training set is empty")
    if data.features.shape[1] != net.layers[0].n_in:
        raise ValueError(f"data has {data.features.shape[1]} features, network expects {net.layers[0].n_in}")
    test = data if test is None else test
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    rng = np.random.default_rng(cfg.seed)
    X = np.ascontiguousarray(data.features, dtype=np.float64)
    T = np.ascontiguousarray(targets_for(net, data.labels))
    kind, p = kernel_kind(net.activation)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        if cfg.batch_mode == "per-example":
            order = rng.permutation(len(data))
            if kind == KIND_THR:
                net, train_loss = _perceptron_epoch(net, X, T, order, cfg.learning_rate)
            else:
                ws, bs = _epoch_params(net)
                if use_numba:
                    train_loss = sgd_epoch_nb(
                        X, T, order, as_typed_list(ws), as_typed_list(bs), kind, p, cfg.learning_rate, cfg.grad_cap, cfg.output_recovery
                    )
                else:
                    train_loss = sgd_epoch_np(
                        X, T, order, ws, bs, kind, p, cfg.learning_rate, cfg.grad_cap, cfg.output_recovery
                    )
                _check_finite(train_loss, epoch)
                net = net.with_params(ws, bs)
        else:
            net, train_loss = _full_batch_step(net, X, T, cfg, epoch)
        _check_finite(train_loss, epoch)
        m = evaluate(net, test, epoch)
        history.append(m)
        if on_epoch is not None:
            on_epoch(epoch, float(train_loss), m)
        logger.debug("epoch %d loss %.5f acc %.4f", epoch, train_loss, m.accuracy)
    return net, history


def _perceptron_epoch(net, X, T, order, lr):
    total = 0.0
    for i in order:
        y, _ = forward(net, X[i])
        total += 0.5 * float(np.sum((y - T[i]) ** 2))
        net = perceptron_step(net, X[i], T[i], lr)
    return net, total / len(order)


def training_slope(act: ActivationKind, cfg: TrainConfig):
    """``slope(a, is_output)`` used by the trainer for this config."""
    if cfg.grad_cap <= 0:
        return lambda a, _out: act.dz(a)
    return lambda a, out: act.training_dz(a, cfg.grad_cap, cfg.output_recovery and out)


def _full_batch_step(net, X, T, cfg, epoch):
    z, cache = forward(net, X)
    train_loss = 0.5 * float(np.sum((z - T) ** 2)) / X.shape[0]
    _check_finite(train_loss, epoch)
    if isinstance(net.activation, Threshold):
        return perceptron_step(net, X, T, cfg.learning_rate), train_loss
    grads = backward(net, cache, T, slope=training_slope(net.activation, cfg))
    return sgd_step(net, grads, cfg.learning_rate), train_loss


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(net: Network, path: str | Path, extra: dict | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "architecture": net.sizes,
        "activation": activation_to_dict(net.activation),
        "weights": [layer.weights.ravel().tolist() for layer in net.layers],
        "biases": [layer.biases.tolist() for layer in net.layers],
    }
    if extra:
        doc["meta"] = extra
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> Network:
    try:
        doc = json.loads(Path(path).read_text())
        sizes = [int(s) for s in doc["architecture"]]
        act = activation_from_dict(doc["activation"])
        ws = [
            np.asarray(w, dtype=np.float64).reshape(n_out, n_in)
            for w, n_in, n_out in zip(doc["weights"], sizes[:-1], sizes[1:])
        ]
        bs = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: not a valid network checkpoint ({exc})") from exc
    if len(ws) != len(sizes) - 1 or len(bs) != len(ws):
        raise ValueError(f"{path}: layer count does not match architecture {sizes}")
    return Network(tuple(DenseLayer(w, b) for w, b in zip(ws, bs)), act)
