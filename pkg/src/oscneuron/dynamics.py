"""Stochastic simulation of the coupled oscillator pair.

Two phase oscillators with bidirectional sine coupling::

    dθ1/dt = 2π (f_mid + a f_amp + k sin(θ2 - θ1)) + noise
    dθ2/dt = 2π (f_mid           + k sin(θ1 - θ2)) + noise

Each phase receives an independent Wiener increment with diffusion
``c = π · linewidth`` so that a free-running oscillator has a Lorentzian line
of the requested FWHM.  Integration is stochastic Heun (Euler–Maruyama noise
increments), carried out in units of one ``f_mid`` period.

The neuron output is read by an exponential-decay peak detector on
``sin θ1 + sin θ2``.  The detector output is read at each cycle peak it
holds; averaging the decaying envelope itself would bias the reading low by
about ``T / 2τ``.  A second readout, ``"power"``, takes the amplitude
from the mean square of the signal in the same window, ``S = sqrt(2 <s²>)``.
It reads exactly √2 (z = 0) for an unlocked pair, where the held peaks of a
beating signal still read high.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _accel
from .activation import SQRT2, Z_SCALE, oscillator_z
from .kernels import (
    N_STATE,
    NOISE_ARRAY,
    NOISE_HASH,
    NOISE_NONE,
    TWO_PI,
    detector_nb,
    detector_np,
    pair_steps_nb,
    pair_steps_np,
)

logger = logging.getLogger(__name__)

CHUNK_STEPS = 2048
NOISE_KINDS = ("gaussian", "binary")
DETECTORS = ("peak", "power")
TASK_BLOCK = 256


@dataclass(frozen=True)
class PairParams:
    """Physical constants of the pair (Hz).  Defaults are typical spin-torque values."""

    f_mid: float = 500e6
    f_amp: float = 10e6
    k: float = 6e6

    def __post_init__(self) -> None:
        if not (self.k > 0 and self.f_amp > 0):
            raise ValueError(f"need k > 0 and f_amp > 0, got k={self.k}, f_amp={self.f_amp}")
        if not self.f_mid > self.f_amp + 2 * self.k:
            raise ValueError(
                f"f_mid={self.f_mid} must exceed f_amp + 2k = {self.f_amp + 2 * self.k}"
            )

    @property
    def rho(self) -> float:
        return self.f_amp / (2.0 * self.k)

    def lock_range(self) -> float:
        """Largest |a| for which the pair can phase-lock."""
        return 2.0 * self.k / self.f_amp

    def natural_frequencies(self, a: float) -> tuple[float, float]:
        return self.f_mid + a * self.f_amp, self.f_mid


@dataclass(frozen=True)
class PhaseState:
    theta1: float
    theta2: float
    t: float = 0.0

    @property
    def phase_difference(self) -> float:
        """``θ1 - θ2`` wrapped to (-π, π]."""
        d = (self.theta1 - self.theta2 + math.pi) % (2 * math.pi) - math.pi
        return d if d != -math.pi else math.pi


@dataclass(frozen=True)
class SimConfig:
    """Integration settings, all in SI units.

    The defaults give 100 steps per carrier period at 500 MHz, a detector
    decay of 20 periods, and 0.5 µs of settling before a 1.5 µs trace.

    ``noise="gaussian"`` draws normal Wiener increments from a per-task
    numpy generator.  ``"binary"`` uses ±1 increments of the same variance
    (the two-point weak scheme) whose signs come from a counter-based hash
    of ``(task key, step)``; it is several times faster and has the same
    phase diffusion.

    ``detector`` picks the amplitude readout: ``"peak"`` (held envelope
    peaks) or ``"power"`` (root mean square).
    """

    dt: float = 20e-12
    duration: float = 2e-6
    linewidth: float = 0.0
    detector_decay: float = 40e-9
    settle_time: float = 0.5e-6
    seed: int = 0
    noise: str = "gaussian"
    detector: str = "peak"

    def validate(self, p: PairParams) -> None:
        if not (self.dt > 0 and self.duration > 0):
            raise ValueError("dt and duration must be positive")
        bound = 1.0 / (50.0 * (p.f_mid + p.f_amp))
        if self.dt > bound * (1 + 1e-12):
            raise ValueError(
                f"dt={self.dt:g} s under-resolves the oscillation; need dt <= {bound:g} s"
            )
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"noise must be one of {NOISE_KINDS}, got {self.noise!r}")
        if self.detector not in DETECTORS:
            raise ValueError(f"detector must be one of {DETECTORS}, got {self.detector!r}")
        if self.linewidth < 0:
            raise ValueError("linewidth must be >= 0")
        if not 0 <= self.settle_time < self.duration:
            raise ValueError("need 0 <= settle_time < duration")
        if not self.detector_decay > 1.0 / p.f_mid:
            raise ValueError("detector_decay must exceed one carrier period")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def settle_steps(self) -> int:
        return int(round(self.settle_time / self.dt))

    def with_(self, **changes) -> SimConfig:
        return replace(self, **changes)


@dataclass(frozen=True)
class SignalTrace:
    """Summed pair signal sampled every ``dt`` from ``t0`` on, plus both phases."""

    samples: np.ndarray
    sample_rate: float
    theta1: np.ndarray
    theta2: np.ndarray
    t0: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(1, self.samples.size + 1) / self.sample_rate

    @property
    def span(self) -> float:
        return self.samples.size / self.sample_rate

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack([self.times, self.samples, self.theta1, self.theta2])
        np.savetxt(path, data, delimiter=",", header="t,signal,theta1,theta2", comments="", fmt="%.9g")


def kuramoto_rates(state: PhaseState, a: float, p: PairParams) -> tuple[float, float]:
    """Phase velocities (rad/s) of both oscillators, without noise."""
    s = math.sin(state.theta2 - state.theta1)
    rate1 = 2 * math.pi * (p.f_mid + a * p.f_amp + p.k * s)
    rate2 = 2 * math.pi * (p.f_mid - p.k * s)
    return rate1, rate2


def task_rng(seed: int, key: Sequence[int]) -> np.random.Generator:
    """Independent stream for one task; depends only on (seed, key)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def _run_batch(
    a: np.ndarray,
    p: PairParams,
    cfg: SimConfig,
    keys: Sequence[Sequence[int]],
    *,
    coupling: float | None = None,
    record_every: int = 0,
    record_full: bool = False,
    use_numba: bool | None = None,
):
    """Integrate ``len(a)`` pairs from θ1 = θ2 = 0 over ``cfg.duration``.

    Returns the final state array, plus either the full per-step record over
    ``[settle_time, duration]`` (``record_full``) or the phases at every
    chunk end (``record_every``) when requested.
    """
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    steps_fn = pair_steps_nb if use_numba else pair_steps_np
    n = len(a)
    h = cfg.dt * p.f_mid
    kc = (p.k if coupling is None else coupling) / p.f_mid
    q = math.exp(-cfg.dt / cfg.detector_decay)
    sigma = math.sqrt(2.0 * math.pi * cfg.linewidth * cfg.dt)
    n_total = cfg.n_steps
    settle = cfg.settle_steps
    window_from = settle + (n_total - settle) // 2

    state = np.zeros((N_STATE, n))
    w1 = 1.0 + np.asarray(a, dtype=np.float64) * (p.f_amp / p.f_mid)
    w2 = np.ones(n)
    if sigma == 0.0:
        mode = NOISE_NONE
    elif cfg.noise == "gaussian":
        mode = NOISE_ARRAY
    else:
        mode = NOISE_HASH
    rngs = [task_rng(cfg.seed, key) for key in keys] if mode == NOISE_ARRAY else []
    hkeys = np.array([task_key(cfg.seed, key) for key in keys], dtype=np.uint64) if mode == NOISE_HASH else np.zeros(n, dtype=np.uint64)

    full = np.empty((n_total - settle, 3, n)) if record_full else None
    coarse = []
    empty_rec = np.empty((0, 3, 0))
    chunk = record_every if record_every else CHUNK_STEPS
    still = np.zeros((1, 2, n))
    # whole turns folded out of the phases; keeps sin() arguments small
    turns = np.zeros((n, 2))
    step0 = 0
    while step0 < n_total:
        m = min(chunk, n_total - step0)
        if mode == NOISE_ARRAY:
            noise = np.empty((m, 2, n))
            for i, g in enumerate(rngs):
                noise[:, :, i] = g.standard_normal((m, 2))
            noise *= sigma
        else:
            noise = still
        rec = empty_rec
        if record_full and step0 + m > settle:
            rec = np.empty((m, 3, n))
        steps_fn(state, w1, w2, kc, h, q, mode, noise, hkeys, sigma, m, step0, settle, window_from, rec)
        if rec.shape[0]:
            lo = max(settle - step0, 0)
            rec[:, 1:, :] += TWO_PI * turns.T[None]
            full[step0 + lo - settle : step0 + m - settle] = rec[lo:]
        whole = np.floor(state[:2].T / TWO_PI)
        state[:2] -= TWO_PI * whole.T
        turns += whole
        if record_every:
            coarse.append(state[:2].T + TWO_PI * turns)
        step0 += m
    state[:2] += TWO_PI * turns.T
    if record_full:
        return state, full
    if record_every:
        return state, np.stack(coarse, axis=1)
    return state, None


def task_key(seed: int, key: Sequence[int]) -> int:
    """64-bit key of the counter-based ``"binary"`` noise stream of one task."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def integrate_pair(a: float, p: PairParams, cfg: SimConfig) -> SignalTrace:
    """Simulate one pair and return the trace over ``[settle_time, duration]``."""
    cfg.validate(p)
    _, rec = _run_batch(np.array([float(a)]), p, cfg, [(0,)], record_full=True)
    return SignalTrace(
        samples=rec[:, 0, 0].copy(),
        sample_rate=1.0 / cfg.dt,
        theta1=rec[:, 1, 0].copy(),
        theta2=rec[:, 2, 0].copy(),
        t0=cfg.settle_steps * cfg.dt,
    )


def _readout(psum, pcnt, esum, ecnt, ssum=0.0, detector="peak") -> float:
    if detector == "power":
        s = math.sqrt(2.0 * ssum / ecnt) if ecnt > 0 else 0.0
    elif pcnt > 0:
        s = psum / pcnt
    elif ecnt > 0:
        s = esum / ecnt
    else:
        s = 0.0
    return min(max(s, 0.0), 2.0)


def peak_detect(trace: SignalTrace, tau: float) -> float:
    """Peak amplitude ``S_hat`` read from an exponential-decay envelope follower.

    The follower runs ``env <- max(sample, env * exp(-dt/tau))`` over the
    whole trace; ``S_hat`` is the mean of the peaks it holds during the final
    half of the trace.
    """
    if trace.span < 10.0 * tau:
        raise ValueError(
            f"trace spans {trace.span:g} s, shorter than 10 detector decays ({10 * tau:g} s); "
            "envelope reading would be unreliable"
        )
    q = math.exp(-1.0 / (trace.sample_rate * tau))
    window_from = trace.samples.size // 2
    detect = detector_nb if _accel.USE_NUMBA else detector_np
    psum, pcnt, esum, ecnt = detect(np.ascontiguousarray(trace.samples, dtype=np.float64), q, window_from)
    return _readout(psum, pcnt, esum, ecnt)


def power_detect(trace: SignalTrace) -> float:
    """Amplitude ``sqrt(2 <s²>)`` over the final half of the trace."""
    tail = np.asarray(trace.samples[trace.samples.size // 2 :], dtype=np.float64)
    if tail.size == 0:
        raise ValueError("empty trace")
    return _readout(0.0, 0, 0.0, tail.size, float(np.dot(tail, tail)), "power")


def amplitude_to_z(s_hat):
    return np.clip((np.asarray(s_hat) - SQRT2) / Z_SCALE, 0.0, 1.0)


def _check_window(p: PairParams, cfg: SimConfig) -> None:
    cfg.validate(p)
    if cfg.duration - cfg.settle_time < 10.0 * cfg.detector_decay:
        raise ValueError("trace after settling is shorter than 10 detector decays")


def dynamical_outputs(
    a: Iterable[float],
    p: PairParams,
    cfg: SimConfig,
    keys: Sequence[Sequence[int]] | None = None,
    *,
    block: int = TASK_BLOCK,
    use_numba: bool | None = None,
) -> np.ndarray:
    """Rescaled detector output ``z`` for many independent neurons.

    ``keys[i]`` seeds the noise of neuron ``i``; by default neuron ``i`` gets
    ``(i,)``.  Results depend only on ``(a[i], keys[i], cfg)``, never on the
    block size or thread count.
    """
    _check_window(p, cfg)
    a = np.asarray(list(a) if not isinstance(a, np.ndarray) else a, dtype=np.float64).ravel()
    if keys is None:
        keys = [(i,) for i in range(a.size)]
    if len(keys) != a.size:
        raise ValueError("need one seed key per neuron")
    spans = [(lo, min(lo + block, a.size)) for lo in range(0, a.size, block)]

    def run(span):
        lo, hi = span
        state, _ = _run_batch(a[lo:hi], p, cfg, keys[lo:hi], use_numba=use_numba)
        return amplitude_to_z([_readout(*col[4:9], cfg.detector) for col in state.T])

    out = np.empty(a.size)
    for (lo, hi), z in zip(spans, _accel.thread_map(run, spans)):
        out[lo:hi] = z
    return out


def dynamical_output(a: float, p: PairParams, cfg: SimConfig) -> float:
    """Output ``z`` of one simulated neuron; agrees with the analytic curve when noiseless."""
    return float(dynamical_outputs([a], p, cfg, [(0,)])[0])


def analytic_output(a, p: PairParams):
    return oscillator_z(a, p.rho)


def estimate_linewidth(
    p: PairParams,
    cfg: SimConfig,
    *,
    n_paths: int = 8,
    record_every: int = 1024,
    max_lag: int = 64,
) -> float:
    """Recover the linewidth (Hz) of free-running oscillators from their phase drift.

    Coupling is switched off, so each of the ``2 * n_paths`` phases is a
    Wiener process around ``2π f t``.  The lag variance of the phase
    deviation, ``Var[X(t + L) - X(t)] = 2 c L``, is fitted by least squares
    through the origin and ``c / π`` is returned.
    """
    cfg.validate(p)
    if record_every * max_lag * 4 > cfg.n_steps:
        raise ValueError("duration too short for the requested lag fit")
    a = np.zeros(n_paths)
    _, coarse = _run_batch(a, p, cfg, [(i,) for i in range(n_paths)], coupling=0.0, record_every=record_every)
    # chunk ends sit at steps record_every, 2*record_every, ...; a short last chunk is dropped
    n_rec = cfg.n_steps // record_every
    coarse = coarse[:, :n_rec]
    steps = record_every * np.arange(1, n_rec + 1)
    ideal = 2.0 * math.pi * steps * (cfg.dt * p.f_mid)
    dev = (coarse - ideal[None, :, None]).transpose(0, 2, 1).reshape(2 * n_paths, n_rec)
    lags = np.arange(1, max_lag + 1)
    var = np.array([np.mean((dev[:, L:] - dev[:, :-L]) ** 2) for L in lags])
    tau = lags * record_every * cfg.dt
    slope = float(tau @ var / (tau @ tau))
    if not slope > 0:
        raise ValueError("fitted phase-diffusion slope is not positive; noise or duration insufficient")
    return slope / (2.0 * math.pi)
