"""Activation functions: the oscillator-pair response and two baselines.

The oscillator neuron reads the peak amplitude ``S`` of the summed signal of
two phase-locked oscillators.  With ``u = a * rho`` (``rho = f_amp / 2k``)::

    S = sqrt(2 + 2 sqrt(1 - u**2))        for |u| <= 1
    z = (S - sqrt 2) / (2 - sqrt 2)

Outside the lock range (|u| > 1) the pair drifts and ``z`` is clamped to 0
with zero derivative, which keeps ``z`` continuous at the edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

SQRT2 = float(np.sqrt(2.0))
Z_SCALE = 2.0 - SQRT2

ArrayLike = Union[float, np.ndarray]


def peak_amplitude(a: ArrayLike, rho: float) -> np.ndarray:
    """Locked peak amplitude ``S(a)``; ``sqrt(2)`` at and beyond the lock edge."""
    u = np.asarray(a, dtype=np.float64) * rho
    inside = np.abs(u) < 1.0
    r = np.sqrt(np.where(inside, 1.0 - u * u, 0.0))
    return np.sqrt(2.0 + 2.0 * r)


def oscillator_z(a: ArrayLike, rho: float) -> np.ndarray:
    s = peak_amplitude(a, rho)
    return (s - SQRT2) / Z_SCALE


def oscillator_dz(a: ArrayLike, rho: float) -> np.ndarray:
    """Exact ``dz/da``; 0 for ``|a * rho| >= 1`` where the true slope diverges."""
    a = np.asarray(a, dtype=np.float64)
    u = a * rho
    inside = np.abs(u) < 1.0
    r = np.sqrt(np.where(inside, 1.0 - u * u, 1.0))
    s = np.sqrt(2.0 + 2.0 * r)
    return np.where(inside, -(a * rho * rho) / (s * r * Z_SCALE), 0.0)


def sigmoid_z(a: ArrayLike, gain: float = 1.0) -> np.ndarray:
    x = gain * np.asarray(a, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_dz(a: ArrayLike, gain: float = 1.0) -> np.ndarray:
    s = sigmoid_z(a, gain)
    return gain * s * (1.0 - s)


def threshold_z(a: ArrayLike, level: float = 0.0) -> np.ndarray:
    return (np.asarray(a, dtype=np.float64) > level).astype(np.float64)


@dataclass(frozen=True)
class Oscillator:
    """Oscillator-pair activation; ``rho = f_amp / (2k)`` is the inverse lock range."""

    rho: float = 5.0 / 6.0
    name = "oscillator"

    def __post_init__(self) -> None:
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ValueError(f"rho must be positive and finite, got {self.rho}")

    @classmethod
    def from_pair(cls, f_amp: float, k: float) -> Oscillator:
        return cls(rho=f_amp / (2.0 * k))

    @property
    def lock_range(self) -> float:
        return 1.0 / self.rho

    def z(self, a: ArrayLike) -> np.ndarray:
        return oscillator_z(a, self.rho)

    def dz(self, a: ArrayLike) -> np.ndarray:
        return oscillator_dz(a, self.rho)

    def training_dz(self, a: ArrayLike, cap: float, recover: bool) -> np.ndarray:
        """Slope used by the trainer: ``dz`` clipped to ``[-cap, cap]``.

        With ``recover``, units past the lock edge get the slope ``-sign(a)*cap``
        instead of 0, so a unit whose target is above 0 is pulled back in.
        """
        g = np.clip(self.dz(a), -cap, cap)
        if recover:
            a = np.asarray(a, dtype=np.float64)
            g = np.where(np.abs(a * self.rho) >= 1.0, -np.sign(a) * cap, g)
        return g

    def params(self) -> dict:
        return {"rho": self.rho}


@dataclass(frozen=True)
class Sigmoid:
    gain: float = 1.0
    name = "sigmoid"

    def __post_init__(self) -> None:
        if not self.gain > 0:
            raise ValueError(f"sigmoid gain must be > 0, got {self.gain}")

    def z(self, a: ArrayLike) -> np.ndarray:
        return sigmoid_z(a, self.gain)

    def dz(self, a: ArrayLike) -> np.ndarray:
        return sigmoid_dz(a, self.gain)

    def training_dz(self, a: ArrayLike, cap: float, recover: bool) -> np.ndarray:
        return np.clip(self.dz(a), -cap, cap)

    def params(self) -> dict:
        return {"gain": self.gain}


@dataclass(frozen=True)
class Threshold:
    """Step neuron.  It has no usable gradient; train it with the perceptron rule."""

    level: float = 0.0
    name = "threshold"

    def z(self, a: ArrayLike) -> np.ndarray:
        return threshold_z(a, self.level)

    def dz(self, a: ArrayLike) -> np.ndarray:
        raise TypeError("threshold activation has no gradient; use the perceptron rule")

    training_dz = dz

    def params(self) -> dict:
        return {"level": self.level}


ActivationKind = Union[Oscillator, Sigmoid, Threshold]

_KINDS = {cls.name: cls for cls in (Oscillator, Sigmoid, Threshold)}
KIND_NAMES = tuple(_KINDS)


def make_activation(name: str, **params) -> ActivationKind:
    try:
        cls = _KINDS[name]
    except KeyError:
        raise ValueError(f"unknown activation kind {name!r}; expected one of {KIND_NAMES}") from None
    return cls(**params)


def activation_to_dict(kind: ActivationKind) -> dict:
    return {"kind": kind.name, **kind.params()}


def activation_from_dict(d: dict) -> ActivationKind:
    d = dict(d)
    return make_activation(d.pop("kind"), **d)


def activation_curve(a_min: float, a_max: float, steps: int, rho: float) -> np.ndarray:
    """Rows of ``(a, z, dz)`` on a uniform grid, for plotting the response."""
    if steps < 2:
        raise ValueError("need at least 2 grid points")
    a = np.linspace(a_min, a_max, steps)
    return np.column_stack([a, oscillator_z(a, rho), oscillator_dz(a, rho)])
