"""Command-line entry point: ``oscneuron <subcommand> [options]``.

Every run writes its result files plus ``<subcommand>.json``, a report that
echoes the resolved configuration.  ``--from-report`` reloads that
configuration; flags given on the command line still win.

Exit codes: 0 success, 2 usage error, 3 missing input file, 4 invalid
configuration, 5 malformed input data, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .activation import ActivationKind, Oscillator, Sigmoid, Threshold, activation_curve
from .datasets import DataFormatError, GateSpec, all_gates, load_iris, load_mnist_dir
from .dynamics import (
    PairParams,
    SimConfig,
    analytic_output,
    dynamical_outputs,
    estimate_linewidth,
    integrate_pair,
)
from .experiments import (
    GATES_HEADER,
    IRIS_HEADER,
    MNIST_HEADER,
    SWEEP_HEADER,
    gate_config,
    gate_rows,
    iris_config,
    mnist_config,
    run_gate_grid,
    run_iris,
    run_mnist,
    run_noise_sweep,
    sweep_rows,
    write_csv,
)
from .network import load_checkpoint

logger = logging.getLogger("oscneuron")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_MISSING, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3, 4, 5

KIND_CHOICES = ("oscillator", "sigmoid", "threshold")

# flat defaults; per-command entries override the shared ones
DEFAULTS = {
    "seed": 0,
    "out_dir": ".",
    "threads": 1,
    "format": "csv",
    "f_mid": 500e6,
    "f_amp": 10e6,
    "k": 6e6,
    "dt": 20e-12,
    "duration": 2e-6,
    "linewidth": 0.0,
    "detector_decay": 40e-9,
    "settle_time": 0.5e-6,
    "noise": "gaussian",
    "detector": "peak",
    "gain": 1.0,
    "level": 0.0,
    "lr": None,
    "epochs": None,
    "grad_cap": None,
    "recovery": None,
    "init_range": None,
    "kind": "oscillator",
    "data_dir": os.environ.get("OSCNEURON_MNIST", "mnist"),
}
COMMAND_DEFAULTS = {
    "activation-curve": {"a_min": -1.5, "a_max": 1.5, "steps": 61},
    "validate-dynamics": {"points": 25, "a_max": 1.08, "trace_a": None, "trace_out": None},
    "estimate-linewidth": {"linewidth": 1e5, "duration": 20e-6, "paths": 8},
    "gates": {"gate": "all", "kind": "all", "inits": 10_000},
    "iris": {"kind": "all", "data": None, "split_seed": 0},
    "mnist": {"subset": None, "test_subset": None, "checkpoint": None},
    "noise-sweep": {"checkpoint": None, "linewidths": "0,1e3,1e4,1e5,1e6,1e7", "n_test": 500, "noise": "binary", "detector": "power"},
}
# never echoed: they must not change result files
NOT_ECHOED = ("threads", "format", "from_report", "out_dir")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run")
    g.add_argument("--seed", type=int, help="base seed (default 0)")
    g.add_argument("--out-dir", help="directory for result files (default .)")
    g.add_argument("--threads", type=int, help="worker thread cap; results do not depend on it")
    g.add_argument("--format", choices=("csv", "json"), help="stdout summary format")
    g.add_argument("--from-report", help="reuse the configuration echoed in a JSON report")
    g = common.add_argument_group("oscillator pair (Hz, s)")
    g.add_argument("--f-mid", type=float)
    g.add_argument("--f-amp", type=float)
    g.add_argument("--k", type=float, help="coupling strength")
    g.add_argument("--dt", type=float)
    g.add_argument("--duration", type=float)
    g.add_argument("--linewidth", type=float)
    g.add_argument("--detector-decay", type=float)
    g.add_argument("--settle-time", type=float)
    g.add_argument("--noise", choices=("gaussian", "binary"))
    g.add_argument("--detector", choices=("peak", "power"), help="amplitude readout")

    train = argparse.ArgumentParser(add_help=False)
    g = train.add_argument_group("training")
    g.add_argument("--lr", type=float, help="learning rate")
    g.add_argument("--epochs", type=int)
    g.add_argument("--grad-cap", type=float, help="activation slope cap during training (0 = off)")
    g.add_argument("--recovery", action=argparse.BooleanOptionalAction, help="output-unit recovery slope")
    g.add_argument("--init-range", type=float, help="uniform init half-width")
    g.add_argument("--gain", type=float, help="sigmoid gain")
    g.add_argument("--level", type=float, help="threshold level")

    p = argparse.ArgumentParser(prog="oscneuron", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"oscneuron {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("activation-curve", parents=[common], help="analytic z(a) and dz/da as CSV")
    s.add_argument("--a-min", type=float)
    s.add_argument("--a-max", type=float)
    s.add_argument("--steps", type=int)

    s = sub.add_parser("validate-dynamics", parents=[common], help="simulated vs analytic z on a grid")
    s.add_argument("--points", type=int)
    s.add_argument("--a-max", type=float, help="grid spans [-a_max, a_max]")
    s.add_argument("--trace-a", type=float, help="also export the trace of one neuron at this input")
    s.add_argument("--trace-out", help="trace CSV path (default <out-dir>/trace.csv)")

    s = sub.add_parser("estimate-linewidth", parents=[common], help="recover an injected linewidth")
    s.add_argument("--paths", type=int, help="independent uncoupled pairs")

    s = sub.add_parser("gates", parents=[common, train], help="gate learnability grid")
    s.add_argument("--gate", help="gate name or 'all'")
    s.add_argument("--kind", help="activation kind or 'all'")
    s.add_argument("--inits", type=int)

    s = sub.add_parser("iris", parents=[common, train], help="Iris per-class training curves")
    s.add_argument("--kind", help="activation kind or 'all'")
    s.add_argument("--data", help="iris CSV (default: bundled copy)")
    s.add_argument("--split-seed", type=int)

    s = sub.add_parser("mnist", parents=[common, train], help="train a 784-300-10 network")
    s.add_argument("--kind", choices=KIND_CHOICES)
    s.add_argument("--data-dir", help="directory holding the four MNIST IDX files")
    s.add_argument("--subset", type=int, help="train on the first N examples")
    s.add_argument("--test-subset", type=int, help="evaluate on the first N test examples")
    s.add_argument("--checkpoint", help="checkpoint path (default <out-dir>/mnist_<kind>.json)")

    s = sub.add_parser("noise-sweep", parents=[common], help="accuracy of a simulated network vs linewidth")
    s.add_argument("--checkpoint", help="network checkpoint from the mnist command")
    s.add_argument("--data-dir", help="directory holding the MNIST IDX files")
    s.add_argument("--linewidths", help="comma-separated linewidths in Hz")
    s.add_argument("--n-test", type=int)
    return p


def _resolve(args: argparse.Namespace) -> dict:
    """Layer built-in defaults, the ``--from-report`` config, then explicit flags."""
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[args.command])
    if args.from_report:
        try:
            doc = json.loads(Path(args.from_report).read_text())
        except FileNotFoundError:
            raise
        except (OSError, ValueError) as exc:
            raise ValueError(f"cannot read report {args.from_report}: {exc}") from exc
        if doc.get("command") != args.command:
            raise ValueError(f"report {args.from_report} is for {doc.get('command')!r}, not {args.command!r}")
        for key, value in doc.get("config", {}).items():
            if key in cfg:
                cfg[key] = value
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "verbose", "from_report"):
            cfg[key] = value
    return cfg


def _pair(cfg: dict) -> PairParams:
    return PairParams(f_mid=cfg["f_mid"], f_amp=cfg["f_amp"], k=cfg["k"])


def _sim(cfg: dict, pair: PairParams) -> SimConfig:
    sim = SimConfig(
        dt=cfg["dt"],
        duration=cfg["duration"],
        linewidth=cfg["linewidth"],
        detector_decay=cfg["detector_decay"],
        settle_time=cfg["settle_time"],
        seed=cfg["seed"],
        noise=cfg["noise"],
        detector=cfg["detector"],
    )
    sim.validate(pair)
    return sim


def _kinds(name: str, cfg: dict, pair: PairParams) -> list[ActivationKind]:
    names = KIND_CHOICES if name == "all" else (name,)
    out = []
    for n in names:
        if n == "oscillator":
            out.append(Oscillator.from_pair(pair.f_amp, pair.k))
        elif n == "sigmoid":
            out.append(Sigmoid(cfg["gain"]))
        elif n == "threshold":
            out.append(Threshold(cfg["level"]))
        else:
            raise ValueError(f"unknown kind {n!r}; expected one of {', '.join(KIND_CHOICES)} or all")
    return out


def _train_overrides(cfg: dict) -> dict:
    keys = {"lr": "learning_rate", "epochs": "epochs", "grad_cap": "grad_cap", "recovery": "output_recovery", "init_range": "weight_init_range"}
    out = {dst: cfg[src] for src, dst in keys.items() if cfg[src] is not None}
    out["seed"] = cfg["seed"]
    return out


def _clean(obj):
    """JSON-safe copy: NaN becomes null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


class Run:
    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["out_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.resolved: dict = {}
        self.results: dict = {}
        self.files: list[str] = []
        self.summary_header: tuple = ()
        self.summary_rows: list = []

    def csv(self, name: str, header, rows) -> None:
        write_csv(self.out / name, header, rows)
        self.files.append(name)

    def add_file(self, path: Path) -> str:
        """Record a file written outside :meth:`csv`; paths under the output directory are kept relative."""
        try:
            name = str(Path(path).resolve().relative_to(self.out.resolve()))
        except ValueError:
            name = str(path)
        self.files.append(name)
        return name

    def summary(self, header, rows) -> None:
        self.summary_header, self.summary_rows = tuple(header), [tuple(r) for r in rows]

    def finish(self) -> None:
        report = {
            "command": self.command,
            "version": __version__,
            "config": {k: v for k, v in sorted(self.cfg.items()) if k not in NOT_ECHOED},
            "resolved": self.resolved,
            "results": self.results,
            "files": self.files,
        }
        text = json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"
        (self.out / f"{self.command}.json").write_text(text)
        if self.cfg["format"] == "json":
            rows = [dict(zip(self.summary_header, r)) for r in self.summary_rows]
            print(json.dumps(_clean(rows), indent=2))
        else:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(self.summary_header)
            w.writerows(self.summary_rows)
            sys.stdout.write(buf.getvalue())


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_activation_curve(run: Run) -> None:
    c = run.cfg
    pair = _pair(c)
    if c["steps"] < 2 or not c["a_max"] > c["a_min"]:
        raise ValueError("need --steps >= 2 and --a-max > --a-min")
    rows = activation_curve(c["a_min"], c["a_max"], c["steps"], pair.rho)
    run.csv("activation_curve.csv", ("a", "z", "dz"), rows.tolist())
    run.resolved = {"pair": asdict(pair), "rho": pair.rho}
    run.results = {"rows": len(rows)}
    run.summary(("a", "z", "dz"), rows.tolist())


def cmd_validate_dynamics(run: Run) -> None:
    c = run.cfg
    pair = _pair(c)
    sim = _sim(c, pair)
    if c["points"] < 2 or not c["a_max"] > 0:
        raise ValueError("need --points >= 2 and --a-max > 0")
    a = np.linspace(-c["a_max"], c["a_max"], c["points"])
    z_dyn = dynamical_outputs(a, pair, sim)
    z_an = analytic_output(a, pair)
    err = np.abs(z_dyn - z_an)
    run.csv("validate_dynamics.csv", ("a", "z_analytic", "z_dynamical", "abs_error"), np.column_stack([a, z_an, z_dyn, err]).tolist())
    if c["trace_a"] is not None:
        trace = integrate_pair(c["trace_a"], pair, sim)
        path = Path(c["trace_out"]) if c["trace_out"] else run.out / "trace.csv"
        trace.to_csv(path)
        run.add_file(path)
    run.resolved = {"pair": asdict(pair), "sim": asdict(sim)}
    run.results = {"max_abs_error": float(err.max()), "points": int(a.size)}
    run.summary(("points", "max_abs_error"), [(int(a.size), float(err.max()))])


def cmd_estimate_linewidth(run: Run) -> None:
    c = run.cfg
    pair = _pair(c)
    sim = _sim(c, pair)
    if c["paths"] < 1:
        raise ValueError("--paths must be >= 1")
    est = estimate_linewidth(pair, sim, n_paths=c["paths"])
    rel = est / sim.linewidth - 1.0 if sim.linewidth > 0 else float("nan")
    run.resolved = {"pair": asdict(pair), "sim": asdict(sim)}
    run.results = {"injected_hz": sim.linewidth, "estimated_hz": est, "relative_error": rel}
    run.csv("linewidth.csv", ("injected_hz", "estimated_hz", "relative_error"), [(sim.linewidth, est, rel)])
    run.summary(("injected_hz", "estimated_hz", "relative_error"), [(sim.linewidth, est, rel)])


def cmd_gates(run: Run) -> None:
    c = run.cfg
    pair = _pair(c)
    if c["inits"] < 1:
        raise ValueError("--inits must be >= 1")
    gates = all_gates() if str(c["gate"]).lower() == "all" else [GateSpec.named(c["gate"])]
    kinds = _kinds(c["kind"], c, pair)
    tcfg = gate_config(**_train_overrides(c))
    rows = []
    for kind in kinds:
        grid = run_gate_grid(kind, gates, c["inits"], tcfg)
        rows.extend(gate_rows(grid.results))
    run.csv("gates.csv", GATES_HEADER, rows)
    run.resolved = {"train": asdict(tcfg), "kinds": [k.name for k in kinds]}
    run.results = {"gates": [dict(zip(GATES_HEADER, r)) for r in rows]}
    run.summary(GATES_HEADER, rows)


def cmd_iris(run: Run) -> None:
    c = run.cfg
    pair = _pair(c)
    data = load_iris(c["data"])
    rows, finals, resolved = [], [], {}
    for kind in _kinds(c["kind"], c, pair):
        tcfg = iris_config(kind, **_train_overrides(c))
        res = run_iris(kind, tcfg, data, split_seed=c["split_seed"])
        rows.extend(res.curve_rows())
        finals.append((kind.name, res.final.accuracy, *res.final.per_class))
        resolved[kind.name] = asdict(tcfg)
    run.csv("iris_curves.csv", IRIS_HEADER, rows)
    head = ("kind", "accuracy", "class_1", "class_2", "class_3")
    run.resolved = {"train": resolved}
    run.results = {"final": [dict(zip(head, f)) for f in finals]}
    run.summary(head, finals)


def cmd_mnist(run: Run) -> None:
    c = run.cfg
    pair = _pair(c)
    (kind,) = _kinds(c["kind"], c, pair)
    tcfg = mnist_config(kind, **_train_overrides(c))
    tr = load_mnist_dir(c["data_dir"], "train").head(c["subset"])
    te = load_mnist_dir(c["data_dir"], "test").head(c["test_subset"])
    ck = Path(c["checkpoint"]) if c["checkpoint"] else run.out / f"mnist_{kind.name}.json"
    res = run_mnist(kind, tr, te, tcfg, checkpoint=ck)
    run.csv("mnist_history.csv", MNIST_HEADER, res.rows)
    ck_name = run.add_file(ck)
    run.resolved = {"train": asdict(tcfg), "n_train": len(tr), "n_test": len(te), "kind": kind.name}
    run.results = {"final_test_accuracy": res.final_accuracy, "checkpoint": ck_name}
    run.summary(("kind", "n_train", "n_test", "test_accuracy"), [(kind.name, len(tr), len(te), res.final_accuracy)])


def cmd_noise_sweep(run: Run) -> None:
    c = run.cfg
    if not c["checkpoint"]:
        raise ValueError("noise-sweep needs --checkpoint")
    pair = _pair(c)
    sim = _sim(c, pair)
    try:
        widths = [float(x) for x in str(c["linewidths"]).split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"--linewidths must be comma-separated numbers, got {c['linewidths']!r}") from None
    net = load_checkpoint(c["checkpoint"])
    te = load_mnist_dir(c["data_dir"], "test")
    res = run_noise_sweep(net, te, widths, c["n_test"], sim, pair)
    rows = sweep_rows(res)
    run.csv("noise_sweep.csv", SWEEP_HEADER, rows)
    run.resolved = {"pair": asdict(pair), "sim": asdict(sim)}
    run.results = {"analytic_accuracy": res.analytic_accuracy, "points": [dict(zip(SWEEP_HEADER, r)) for r in rows]}
    run.summary(SWEEP_HEADER, rows)


COMMANDS = {
    "activation-curve": cmd_activation_curve,
    "validate-dynamics": cmd_validate_dynamics,
    "estimate-linewidth": cmd_estimate_linewidth,
    "gates": cmd_gates,
    "iris": cmd_iris,
    "mnist": cmd_mnist,
    "noise-sweep": cmd_noise_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _resolve(args)
        if cfg["threads"] < 1:
            raise ValueError("--threads must be >= 1")
        _accel.set_threads(cfg["threads"])
        run = Run(args.command, cfg)
        COMMANDS[args.command](run)
        run.finish()
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING, f"missing file: {exc.filename or exc}")
    except DataFormatError as exc:
        return _fail(EXIT_DATA, str(exc))
    except (ValueError, TypeError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    return EXIT_OK


def _fail(code: int, msg: str) -> int:
    print(f"oscneuron: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
