"""Neurons built from a pair of coupled phase oscillators.

The output of a neuron is the peak amplitude of the summed signal of two
frequency-locked oscillators, one of which is detuned by the weighted input.
The package provides the closed-form activation, a stochastic simulator of
the oscillator pair, dense networks trained by backpropagation, and the
experiment drivers behind the ``oscneuron`` command.
"""

from .activation import Oscillator, Sigmoid, Threshold, make_activation, oscillator_dz, oscillator_z
from .datasets import GateSpec, LabeledDataset, load_iris, load_mnist_idx, split
from .dynamics import PairParams, SimConfig, analytic_output, dynamical_output, estimate_linewidth, integrate_pair
from .network import DenseLayer, Network, TrainConfig, evaluate, forward, backward, train

__version__ = "0.1.0"

__all__ = [
    "DenseLayer",
    "GateSpec",
    "LabeledDataset",
    "Network",
    "Oscillator",
    "PairParams",
    "Sigmoid",
    "SimConfig",
    "Threshold",
    "TrainConfig",
    "analytic_output",
    "backward",
    "dynamical_output",
    "estimate_linewidth",
    "evaluate",
    "forward",
    "integrate_pair",
    "load_iris",
    "load_mnist_idx",
    "make_activation",
    "oscillator_dz",
    "oscillator_z",
    "split",
    "train",
]
