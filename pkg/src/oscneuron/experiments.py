"""Experiment drivers: gate learnability, Iris curves, MNIST, and the noise sweep.

Every driver is a pure function of its arguments and seed.  Work that splits
into independent tasks (gate initializations, test examples, neurons) gets a
per-task seed, so results do not depend on how the work is scheduled.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _accel
from .activation import ActivationKind, Oscillator
from .datasets import GateSpec, LabeledDataset, all_gates, load_iris, split
from .dynamics import PairParams, SimConfig, dynamical_outputs
from .kernels import gate_ensemble_nb, gate_ensemble_np
from .network import Metrics, Network, TrainConfig, classify, kernel_kind, save_checkpoint, train

logger = logging.getLogger(__name__)

GATE_INITS = 10_000
GATE_MAX_ITER = 10_000
GATE_INIT_RANGE = 0.4
GATE_CHUNK = 1024

IRIS_EPOCHS = 200
IRIS_SPLIT = 0.5

MNIST_SIZES = (784, 300, 10)
SWEEP_LINEWIDTHS = (0.0, 1e3, 1e4, 1e5, 1e6, 1e7)
SWEEP_N_TEST = 500


# ---------------------------------------------------------------------------
# default configurations
# ---------------------------------------------------------------------------


def gate_config(**overrides) -> TrainConfig:
    """Full-batch descent, lr 0.05, at most 10,000 iterations, inits uniform in ±0.4."""
    base = dict(learning_rate=0.05, epochs=GATE_MAX_ITER, batch_mode="full-batch", weight_init_range=GATE_INIT_RANGE)
    base.update(overrides)
    return TrainConfig(**base)


def iris_config(kind: ActivationKind, **overrides) -> TrainConfig:
    """Per-example SGD, lr 0.05, 200 epochs; oscillators get the capped slopes of :func:`mnist_config`."""
    base = dict(learning_rate=0.05, epochs=IRIS_EPOCHS, batch_mode="per-example")
    if isinstance(kind, Oscillator):
        base.update(grad_cap=2.0, output_recovery=True)
    base.update(overrides)
    return TrainConfig(**base)


def mnist_config(kind: ActivationKind, **overrides) -> TrainConfig:
    """Per-example SGD for 20 epochs.

    Oscillator networks train with slopes capped at 2 and output-unit
    recovery; without them the steep slope near the lock edge throws units
    out of lock and the network dies within one epoch.  The sigmoid baseline
    uses a larger rate because its slope never exceeds 1/4.
    """
    if isinstance(kind, Oscillator):
        base = dict(learning_rate=0.01, epochs=20, grad_cap=2.0, output_recovery=True)
    else:
        base = dict(learning_rate=0.1, epochs=20)
    base.update(overrides)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# gate learnability
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GateResult:
    gate: str
    kind: str
    trials: int
    successes: int
    mean_iterations: float

    @property
    def fraction(self) -> float:
        return self.successes / self.trials


@dataclass(frozen=True)
class GateGridResult:
    kind: str
    results: tuple[GateResult, ...]

    def fraction(self, gate: str) -> float:
        return self.by_gate()[gate.upper()].fraction

    def by_gate(self) -> dict[str, GateResult]:
        return {r.gate: r for r in self.results}


def gate_inits(n_inits: int, init_range: float, seed: int) -> np.ndarray:
    """``(n_inits, 3)`` rows of (w1, w2, b); chunk ``c`` is drawn from ``(seed, c)``.

    A prefix of a larger ensemble equals the smaller ensemble.
    """
    out = np.empty((n_inits, 3))
    for c, lo in enumerate(range(0, n_inits, GATE_CHUNK)):
        hi = min(lo + GATE_CHUNK, n_inits)
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(c,)))
        out[lo:hi] = rng.uniform(-init_range, init_range, (GATE_CHUNK, 3))[: hi - lo]
    return out


def train_gate_ensemble(
    gate: GateSpec,
    kind: ActivationKind,
    n_inits: int = GATE_INITS,
    cfg: TrainConfig | None = None,
    *,
    use_numba: bool | None = None,
) -> GateResult:
    """Train ``n_inits`` single neurons on ``gate`` and count the ones that learn it.

    A neuron has learned the gate when all four outputs sit on the correct
    side of 0.5.  Training is full-batch descent on the squared error
    (perceptron rule for threshold neurons) for at most ``cfg.epochs``
    iterations, stopping early on success.
    """
    if n_inits < 1:
        raise ValueError("n_inits must be >= 1")
    cfg = gate_config() if cfg is None else cfg
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    code, p = kernel_kind(kind)
    r = GATE_INIT_RANGE if cfg.weight_init_range is None else cfg.weight_init_range
    params = gate_inits(n_inits, r, cfg.seed)
    target = gate.target_array
    fn = gate_ensemble_nb if use_numba else gate_ensemble_np
    spans = [(lo, min(lo + GATE_CHUNK, n_inits)) for lo in range(0, n_inits, GATE_CHUNK)]

    def run(span):
        lo, hi = span
        chunk = np.ascontiguousarray(params[lo:hi])
        return fn(chunk, target, code, p, cfg.learning_rate, cfg.epochs)

    succ = 0
    iters_ok = 0
    for iters, ok in _accel.thread_map(run, spans):
        succ += int(ok.sum())
        iters_ok += int(iters[ok].sum())
    mean_it = iters_ok / succ if succ else float("nan")
    return GateResult(gate.name, kind.name, n_inits, succ, mean_it)


def run_gate_grid(
    kind: ActivationKind,
    gates: Iterable[GateSpec] | None = None,
    n_inits: int = GATE_INITS,
    cfg: TrainConfig | None = None,
) -> GateGridResult:
    gates = all_gates() if gates is None else list(gates)
    return GateGridResult(kind.name, tuple(train_gate_ensemble(g, kind, n_inits, cfg) for g in gates))


def gate_from_weights(w: Sequence[float], b: float, kind: ActivationKind) -> np.ndarray:
    """Outputs of one neuron over the inputs (0,0), (0,1), (1,0), (1,1)."""
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    return kind.z(x @ np.asarray(w, dtype=np.float64) + b)


# ---------------------------------------------------------------------------
# Iris
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IrisResult:
    kind: str
    history: tuple[Metrics, ...]
    net: Network = field(repr=False)

    @property
    def final(self) -> Metrics:
        return self.history[-1]

    def curve_rows(self) -> list[tuple[int, int, float, str]]:
        """``(epoch, class, rate, kind)`` with classes numbered from 1."""
        return [(m.epoch, c + 1, rate, self.kind) for m in self.history for c, rate in enumerate(m.per_class)]


def run_iris(
    kind: ActivationKind,
    cfg: TrainConfig | None = None,
    data: LabeledDataset | None = None,
    *,
    fraction: float = IRIS_SPLIT,
    split_seed: int = 0,
) -> IrisResult:
    """Train a single 4 -> 3 layer and record per-class test rates each epoch.

    The stratified split uses ``split_seed`` and is shared by all kinds, so
    curves of different activations are comparable.
    """
    cfg = iris_config(kind) if cfg is None else cfg
    data = load_iris() if data is None else data
    tr, te = split(data, fraction, split_seed)
    rng = np.random.default_rng(cfg.seed)
    net = Network.initialize([data.features.shape[1], data.n_classes], kind, rng, cfg.weight_init_range)
    net, hist = train(net, tr, cfg, te)
    return IrisResult(kind.name, tuple(hist), net)


# ---------------------------------------------------------------------------
# MNIST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MnistResult:
    kind: str
    rows: tuple[tuple[int, float, float], ...]  # (epoch, train_loss, test_acc)
    net: Network = field(repr=False)

    @property
    def final_accuracy(self) -> float:
        return self.rows[-1][2]


def run_mnist(
    kind: ActivationKind,
    train_data: LabeledDataset,
    test_data: LabeledDataset,
    cfg: TrainConfig | None = None,
    *,
    sizes: Sequence[int] = MNIST_SIZES,
    checkpoint: str | Path | None = None,
    progress: Callable[[int, float, float], None] | None = None,
) -> MnistResult:
    cfg = mnist_config(kind) if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed)
    net = Network.initialize(list(sizes), kind, rng, cfg.weight_init_range)
    rows = []

    def on_epoch(epoch, train_loss, m):
        rows.append((epoch, train_loss, m.accuracy))
        logger.info("mnist %s epoch %d loss %.5f test %.4f", kind.name, epoch, train_loss, m.accuracy)
        if progress is not None:
            progress(epoch, train_loss, m.accuracy)

    net, _ = train(net, train_data, cfg, test_data, on_epoch=on_epoch)
    if checkpoint is not None:
        save_checkpoint(net, checkpoint, {"final_test_accuracy": rows[-1][2], "epochs": cfg.epochs})
    return MnistResult(kind.name, tuple(rows), net)


# ---------------------------------------------------------------------------
# noise sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    linewidth_hz: float
    n_test: int
    accuracy: float
    seed: int


@dataclass(frozen=True)
class NoiseSweepResult:
    points: tuple[SweepPoint, ...]
    analytic_accuracy: float

    def accuracy_at(self, linewidth: float) -> float:
        for pt in self.points:
            if pt.linewidth_hz == linewidth:
                return pt.accuracy
        raise KeyError(linewidth)


def dynamical_forward(
    net: Network,
    X: np.ndarray,
    example_ids: Sequence[int],
    pair: PairParams,
    sim: SimConfig,
) -> np.ndarray:
    """Network outputs with every neuron replaced by a simulated oscillator pair.

    Neuron ``j`` of layer ``l`` on example ``e`` draws its noise from key
    ``(e, l, j)``, so an example's outputs do not depend on its batch.
    """
    z = np.asarray(X, dtype=np.float64)
    ids = np.asarray(example_ids, dtype=np.int64)
    for l, layer in enumerate(net.layers):
        a = z @ layer.weights.T + layer.biases
        n_ex, n_out = a.shape
        keys = [(int(e), l, j) for e in ids for j in range(n_out)]
        z = dynamical_outputs(a.ravel(), pair, sim, keys).reshape(n_ex, n_out)
    return z


def run_noise_sweep(
    net: Network,
    test: LabeledDataset,
    linewidths: Sequence[float] = SWEEP_LINEWIDTHS,
    n_test: int = SWEEP_N_TEST,
    sim: SimConfig | None = None,
    pair: PairParams | None = None,
    *,
    batch: int = 16,
    progress: Callable[[float, int], None] | None = None,
) -> NoiseSweepResult:
    """Inference-only accuracy of a trained oscillator network versus linewidth.

    The first ``n_test`` test examples are used at every linewidth.  The seed
    of ``sim`` is the base seed of all neuron noise streams.
    """
    if not isinstance(net.activation, Oscillator):
        raise ValueError("the noise sweep needs a network trained with the oscillator activation")
    pair = PairParams() if pair is None else pair
    sim = SimConfig(noise="binary", detector="power") if sim is None else sim
    if not math.isclose(net.activation.rho, pair.rho, rel_tol=1e-9):
        raise ValueError(f"network rho {net.activation.rho} does not match pair rho {pair.rho}")
    lw = [float(x) for x in linewidths]
    if any(b <= a for a, b in zip(lw, lw[1:])) or any(x < 0 for x in lw):
        raise ValueError("linewidths must be non-negative and strictly increasing")
    if not 1 <= n_test <= len(test):
        raise ValueError(f"n_test must lie in [1, {len(test)}]")
    sub = test.head(n_test)
    analytic = float(np.mean(classify(net.activation.z(_analytic_pre(net, sub.features))) == sub.labels))
    points = []
    for width in lw:
        cfg = sim.with_(linewidth=width)
        correct = 0
        for lo in range(0, n_test, batch):
            hi = min(lo + batch, n_test)
            z = dynamical_forward(net, sub.features[lo:hi], range(lo, hi), pair, cfg)
            correct += int(np.sum(classify(z) == sub.labels[lo:hi]))
            if progress is not None:
                progress(width, hi)
        points.append(SweepPoint(width, n_test, correct / n_test, sim.seed))
        logger.info("noise sweep linewidth %g Hz accuracy %.4f", width, correct / n_test)
    return NoiseSweepResult(tuple(points), analytic)


def _analytic_pre(net: Network, X: np.ndarray) -> np.ndarray:
    z = X
    for layer in net.layers[:-1]:
        z = net.activation.z(z @ layer.weights.T + layer.biases)
    last = net.layers[-1]
    return z @ last.weights.T + last.biases


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------

GATES_HEADER = ("gate", "kind", "trials", "successes", "fraction")
IRIS_HEADER = ("epoch", "class", "rate", "kind")
MNIST_HEADER = ("epoch", "train_loss", "test_acc")
SWEEP_HEADER = ("linewidth_hz", "n_test", "accuracy", "seed")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def gate_rows(results: Iterable[GateResult]) -> list[tuple]:
    return [(r.gate, r.kind, r.trials, r.successes, r.fraction) for r in results]


def sweep_rows(result: NoiseSweepResult) -> list[tuple]:
    return [(p.linewidth_hz, p.n_test, p.accuracy, p.seed) for p in result.points]
