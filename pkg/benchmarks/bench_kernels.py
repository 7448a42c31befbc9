"""Time the numba kernels against their numpy twins on identical inputs.

    python benchmarks/bench_kernels.py [--tasks 256] [--steps 4096] [--repeat 3]

Prints one CSV row per kernel: kernel, backend, seconds, ns per unit of work.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from oscneuron.datasets import GateSpec
from oscneuron.kernels import (
    KIND_OSC,
    N_STATE,
    NOISE_ARRAY,
    NOISE_HASH,
    detector_nb,
    detector_np,
    gate_ensemble_nb,
    gate_ensemble_np,
    pair_steps_nb,
    pair_steps_np,
    sgd_epoch_nb,
    sgd_epoch_np,
)
from oscneuron.network import as_typed_list


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_pair(n_tasks, n_steps, repeat):
    rng = np.random.default_rng(0)
    w1 = 1.0 + rng.uniform(-0.02, 0.02, n_tasks)
    w2 = np.ones(n_tasks)
    keys = rng.integers(0, 2**63, n_tasks).astype(np.uint64)
    noise = rng.normal(0.0, 1e-3, (n_steps, 2, n_tasks))
    still = np.zeros((1, 2, n_tasks))
    rec = np.empty((0, 3, 0))
    rows = []
    for label, mode, nz in (("pair_steps/array-noise", NOISE_ARRAY, noise), ("pair_steps/hash-noise", NOISE_HASH, still)):
        for backend, fn in (("numba", pair_steps_nb), ("numpy", pair_steps_np)):
            def run():
                st = np.zeros((N_STATE, n_tasks))
                fn(st, w1, w2, 0.012, 0.01, 0.9995, mode, nz, keys, 1e-3, n_steps, 0, 0, n_steps // 2, rec)

            run()
            t = best_of(run, repeat)
            rows.append((label, backend, t, 1e9 * t / (n_tasks * n_steps)))
    return rows


def bench_detector(n, repeat):
    s = np.sin(np.linspace(0.0, 2 * np.pi * n / 100, n)) * 1.9
    rows = []
    for backend, fn in (("numba", detector_nb), ("numpy", detector_np)):
        fn(s, 0.9995, n // 2)
        t = best_of(lambda: fn(s, 0.9995, n // 2), repeat)
        rows.append(("detector", backend, t, 1e9 * t / n))
    return rows


def bench_gates(n_inits, repeat):
    target = GateSpec.named("XOR").target_array
    init = np.random.default_rng(0).uniform(-0.4, 0.4, (n_inits, 3))
    rows = []
    for backend, fn in (("numba", gate_ensemble_nb), ("numpy", gate_ensemble_np)):
        fn(init[:2].copy(), target, KIND_OSC, 5 / 6, 0.05, 10)
        t = best_of(lambda: fn(init.copy(), target, KIND_OSC, 5 / 6, 0.05, 2000), repeat)
        rows.append(("gate_ensemble", backend, t, 1e9 * t / n_inits))
    return rows


def bench_sgd(n_examples, repeat):
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, (n_examples, 784))
    T = np.eye(10)[rng.integers(0, 10, n_examples)]
    order = np.arange(n_examples)
    w0 = [rng.uniform(-0.04, 0.04, (300, 784)), rng.uniform(-0.07, 0.07, (10, 300))]
    b0 = [np.zeros(300), np.zeros(10)]
    rows = []
    for backend in ("numba", "numpy"):
        def run():
            ws = [w.copy() for w in w0]
            bs = [b.copy() for b in b0]
            if backend == "numba":
                sgd_epoch_nb(X, T, order, as_typed_list(ws), as_typed_list(bs), KIND_OSC, 5 / 6, 0.01, 2.0, True)
            else:
                sgd_epoch_np(X, T, order, ws, bs, KIND_OSC, 5 / 6, 0.01, 2.0, True)

        run()
        t = best_of(run, repeat)
        rows.append(("sgd_epoch", backend, t, 1e9 * t / n_examples))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--tasks", type=int, default=256)
    ap.add_argument("--steps", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rows = bench_pair(args.tasks, args.steps, args.repeat)
    rows += bench_detector(args.tasks * args.steps, args.repeat)
    rows += bench_gates(4096, args.repeat)
    rows += bench_sgd(500, args.repeat)
    print("kernel,backend,seconds,ns_per_unit")
    for name, backend, t, per in rows:
        print(f"{name},{backend},{t:.4f},{per:.1f}")


if __name__ == "__main__":
    main()
