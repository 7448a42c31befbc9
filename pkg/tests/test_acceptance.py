"""Acceptance criteria, each run at its stated tolerance.

Every test appends one PASS/FAIL line to the terminal summary before
asserting, so a failing criterion still reports its measured value.
"""

import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES

from oscneuron.activation import Oscillator, Sigmoid, Threshold, oscillator_dz, oscillator_z
from oscneuron.cli import main
from oscneuron.datasets import GATE_NAMES, NOT_LINEARLY_SEPARABLE, GateSpec, load_mnist_dir
from oscneuron.dynamics import PairParams, SimConfig, analytic_output, dynamical_outputs, estimate_linewidth
from oscneuron.experiments import (
    GATE_INITS,
    gate_from_weights,
    mnist_config,
    run_gate_grid,
    run_iris,
    run_mnist,
    run_noise_sweep,
)
from oscneuron.network import Network, backward, forward, loss, save_checkpoint

PAIR = PairParams()
OSC = Oscillator.from_pair(PAIR.f_amp, PAIR.k)


def record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# ---------------------------------------------------------------------------
# 1. analytic and simulated outputs agree
# ---------------------------------------------------------------------------


def test_1_oracle_equivalence():
    t0 = time.perf_counter()
    a = np.linspace(-1.08, 1.08, 25)
    err = float(np.max(np.abs(dynamical_outputs(a, PAIR, SimConfig()) - analytic_output(a, PAIR))))
    dt = time.perf_counter() - t0
    ok = err < 0.02 and dt < 30
    record(1, "analytic vs simulated z", ok, f"max |dz| = {err:.2e} (< 0.02), {dt:.1f} s (< 30 s)")
    assert ok


# ---------------------------------------------------------------------------
# 2. gradients against central differences
# ---------------------------------------------------------------------------

H = 1e-6
# relative error denominator floor; keeps vanishing gradients from dividing by ~0
FLOOR = 1e-4


def _rel(g, fd):
    return float(np.max(np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), FLOOR)))


def _clear_of_edges(net, x, margin=0.02):
    # the slope diverges at the lock edge; differences straddling it are meaningless
    _, cache = forward(net, x)
    u = np.concatenate([a.ravel() for _, a in cache]) * OSC.rho
    return bool(np.all(np.abs(np.abs(u) - 1.0) > margin))


def _fd_param(net, x, t, j, which, idx):
    vals = []
    for s in (1.0, -1.0):
        ws = [l.weights.copy() for l in net.layers]
        bs = [l.biases.copy() for l in net.layers]
        (ws if which == "w" else bs)[j][idx] += s * H
        vals.append(loss(net.with_params(ws, bs), x, t))
    return (vals[0] - vals[1]) / (2 * H)


def _check_network(sizes, rng, n_cases, n_params=None, x_scale=1.0, init=None):
    worst, done = 0.0, 0
    while done < n_cases:
        net = Network.initialize(sizes, OSC, rng, init)
        x = rng.uniform(0, x_scale, sizes[0])
        if not _clear_of_edges(net, x):
            continue
        t = rng.uniform(0, 1, sizes[-1])
        _, cache = forward(net, x)
        grads = backward(net, cache, t)
        slots = [(j, w, idx) for j, l in enumerate(net.layers)
                 for w, arr in (("w", l.weights), ("b", l.biases)) for idx in np.ndindex(*arr.shape)]
        if n_params is not None:
            pick = rng.choice(len(slots), n_params, replace=False)
            slots = [slots[i] for i in pick]
        g = np.array([grads[j][0 if w == "w" else 1][idx] for j, w, idx in slots])
        fd = np.array([_fd_param(net, x, t, j, w, idx) for j, w, idx in slots])
        worst = max(worst, _rel(g, fd))
        done += 1
    return worst


def test_2_gradient_fidelity():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    a = rng.uniform(-0.95, 0.95, 100) / OSC.rho
    fd = (oscillator_z(a + H, OSC.rho) - oscillator_z(a - H, OSC.rho)) / (2 * H)
    act = _rel(oscillator_dz(a, OSC.rho), fd)
    single = _check_network([2, 1], rng, 100, init=0.6)
    iris = _check_network([4, 3], rng, 100, init=0.6)
    mnist = _check_network([784, 300, 10], rng, 100, n_params=20)
    dt = time.perf_counter() - t0
    worst = max(act, single, iris, mnist)
    ok = worst < 1e-5
    record(2, "gradient fidelity", ok,
           f"max rel err dz/da {act:.1e}, 2-1 {single:.1e}, 4-3 {iris:.1e}, 784-300-10 {mnist:.1e} (< 1e-5), {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 3. gate learnability grid
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_3_gate_grid():
    t0 = time.perf_counter()
    grids = {k.name: run_gate_grid(k) for k in (Threshold(), Sigmoid(), OSC)}
    dt = time.perf_counter() - t0
    problems = []
    for name, grid in grids.items():
        for gate in GATE_NAMES:
            f = grid.fraction(gate)
            if gate in NOT_LINEARLY_SEPARABLE:
                if name != "oscillator" and f != 0.0:
                    problems.append(f"{name} {gate} = {f}")
            elif f < 0.99:
                problems.append(f"{name} {gate} = {f}")
    xor, xnor = grids["oscillator"].fraction("XOR"), grids["oscillator"].fraction("XNOR")
    if not 0.05 < xor < 0.40:
        problems.append(f"oscillator XOR = {xor}")
    if not 0.10 < xnor < 0.50:
        problems.append(f"oscillator XNOR = {xnor}")
    ok = not problems and dt < 600
    detail = f"{GATE_INITS} inits, oscillator XOR {xor:.4f}, XNOR {xnor:.4f}, {dt:.0f} s (< 600 s)"
    record(3, "gate grid", ok, detail + ("; " + ", ".join(problems) if problems else ""))
    assert ok


# ---------------------------------------------------------------------------
# 4. hand-built gates
# ---------------------------------------------------------------------------


def test_4_exact_gates():
    xor = gate_from_weights([1.2, 1.2], -1.2, OSC)
    and_ = gate_from_weights([1.2, 1.2], -2.4, OSC)
    e_xor = float(np.max(np.abs(xor - GateSpec.named("XOR").target_array)))
    e_and = float(np.max(np.abs(and_ - GateSpec.named("AND").target_array)))
    ok = e_xor <= 0.01 and e_and <= 0.01
    record(4, "constructed XOR / AND", ok, f"max output error XOR {e_xor:.1e}, AND {e_and:.1e} (<= 0.01)")
    assert ok


# ---------------------------------------------------------------------------
# 5. Iris
# ---------------------------------------------------------------------------


def test_5_iris():
    t0 = time.perf_counter()
    osc = run_iris(OSC).final.per_class
    sig = run_iris(Sigmoid()).final.per_class
    dt = time.perf_counter() - t0
    ok = osc[0] == 1.0 and osc[2] >= 0.95 and osc[1] >= 0.70 and sig[1] >= 0.65 and dt < 60
    record(5, "Iris per-class rates", ok,
           f"oscillator {osc[0]:.2f}/{osc[1]:.2f}/{osc[2]:.2f} (1.00/>=0.70/>=0.95), "
           f"sigmoid class 2 {sig[1]:.2f} (>= 0.65), {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 6. MNIST, and 7. noise sweep on the trained oscillator network
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def mnist_data(mnist_dir):
    return load_mnist_dir(mnist_dir, "train"), load_mnist_dir(mnist_dir, "test")


@pytest.fixture(scope="session")
def oscillator_mnist(mnist_data):
    tr, te = mnist_data
    t0 = time.perf_counter()
    res = run_mnist(OSC, tr, te, mnist_config(OSC))
    return res, time.perf_counter() - t0


@pytest.mark.slow
def test_6_mnist(oscillator_mnist, mnist_data):
    tr, te = mnist_data
    osc, t_osc = oscillator_mnist
    t0 = time.perf_counter()
    sig = run_mnist(Sigmoid(), tr, te, mnist_config(Sigmoid()))
    t_sig = time.perf_counter() - t0
    ok = osc.final_accuracy >= 0.95 and sig.final_accuracy >= 0.945 and max(t_osc, t_sig) <= 3600
    record(6, "MNIST 784-300-10", ok,
           f"oscillator {osc.final_accuracy:.4f} (>= 0.950, {t_osc:.0f} s), "
           f"sigmoid {sig.final_accuracy:.4f} (>= 0.945, {t_sig:.0f} s)")
    assert ok


@pytest.mark.slow
def test_7_noise_sweep(oscillator_mnist, mnist_data):
    _, te = mnist_data
    net = oscillator_mnist[0].net
    widths = (0.0, 1e4, 1e5, 1e6, 1e7)
    t0 = time.perf_counter()
    res = run_noise_sweep(net, te, widths, 500)
    dt = time.perf_counter() - t0
    acc = [p.accuracy for p in res.points]
    at = dict(zip(widths, acc))
    steps_ok = all(b <= a + 0.02 for a, b in zip(acc[1:], acc[2:]))
    ok = (
        at[1e5] >= 0.80
        and abs(at[0.0] - res.analytic_accuracy) <= 0.02
        and steps_ok
        and dt <= 7200
    )
    curve = ", ".join(f"{w:g} Hz {a:.3f}" for w, a in zip(widths, acc))
    record(7, "noise robustness", ok,
           f"{curve}; analytic {res.analytic_accuracy:.3f}; non-increasing from 10 kHz: {steps_ok}; {dt:.0f} s")
    assert ok


# ---------------------------------------------------------------------------
# 8. injected linewidth is recovered
# ---------------------------------------------------------------------------


def test_8_linewidth_recovery():
    t0 = time.perf_counter()
    est = estimate_linewidth(PAIR, SimConfig(linewidth=1e5, duration=20e-6))
    dt = time.perf_counter() - t0
    rel = est / 1e5 - 1
    ok = abs(rel) <= 0.25 and dt < 60
    record(8, "linewidth self-consistency", ok, f"100 kHz injected, {est / 1e3:.1f} kHz estimated ({rel:+.1%}, within 25%), {dt:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 9. results do not depend on --threads
# ---------------------------------------------------------------------------


def test_9_determinism(tmp_path, mnist_dir, capsys):
    ck = tmp_path / "net.json"
    save_checkpoint(Network.initialize([784, 8, 10], OSC, np.random.default_rng(0)), ck)
    short = ["--duration", "1.2e-6", "--settle-time", "0.4e-6"]
    commands = [
        ["activation-curve", "--steps", "31"],
        ["validate-dynamics", "--points", "9", "--linewidth", "1e6", "--trace-a", "0.5", *short],
        ["estimate-linewidth", "--duration", "8e-6", "--paths", "4"],
        ["gates", "--inits", "1500", "--gate", "all", "--kind", "all", "--epochs", "300"],
        ["iris", "--epochs", "20"],
        ["mnist", "--data-dir", str(mnist_dir), "--subset", "300", "--test-subset", "200", "--epochs", "2"],
        ["noise-sweep", "--checkpoint", str(ck), "--data-dir", str(mnist_dir), "--linewidths", "0,1e6",
         "--n-test", "20", *short],
    ]
    differing = []
    for argv in commands:
        dirs = []
        for n in ("1", "4"):
            out = tmp_path / argv[0] / n
            assert main([*argv, "--seed", "11", "--threads", n, "--out-dir", str(out)]) == 0
            dirs.append(out)
        names = sorted(p.name for p in dirs[0].iterdir())
        if names != sorted(p.name for p in dirs[1].iterdir()):
            differing.append(f"{argv[0]}: file sets differ")
        for name in names:
            if (dirs[0] / name).read_bytes() != (dirs[1] / name).read_bytes():
                differing.append(f"{argv[0]}/{name}")
    capsys.readouterr()
    ok = not differing
    record(9, "determinism across --threads", ok,
           f"{len(commands)} subcommands at threads 1 and 4" + ("; differ: " + ", ".join(differing) if differing else ", all files identical"))
    assert ok
