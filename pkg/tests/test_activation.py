import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oscneuron.activation import (
    KIND_NAMES,
    Oscillator,
    Sigmoid,
    Threshold,
    activation_curve,
    activation_from_dict,
    activation_to_dict,
    make_activation,
    oscillator_dz,
    oscillator_z,
    peak_amplitude,
    sigmoid_dz,
    sigmoid_z,
    threshold_z,
)

RHO = 5.0 / 6.0
SQ2 = math.sqrt(2.0)


def central(f, a, h):
    return (f(a + h) - f(a - h)) / (2 * h)


class TestOscillatorZ:
    def test_peak_at_zero_detuning(self):
        assert oscillator_z(0.0, RHO) == pytest.approx(1.0, abs=1e-15)

    def test_lock_edge_is_zero(self):
        assert oscillator_z(1.2, RHO) == pytest.approx(0.0, abs=1e-12)

    def test_half_lock_closed_form(self):
        # a*rho = 1/2 gives S = sqrt(2 + sqrt 3) = (sqrt 6 + sqrt 2) / 2
        want = ((math.sqrt(6) + SQ2) / 2 - SQ2) / (2 - SQ2)
        assert oscillator_z(0.6, RHO) == pytest.approx(want, rel=1e-14)
        assert want == pytest.approx(0.8837, abs=1e-4)

    def test_amplitude_matches_cosine_of_half_phase(self):
        # locked phase difference phi has sin(phi) = a*rho and S = 2 cos(phi/2)
        for a in (-1.1, -0.3, 0.2, 0.9):
            phi = math.asin(a * RHO)
            assert peak_amplitude(a, RHO) == pytest.approx(2 * math.cos(phi / 2), rel=1e-14)

    def test_clamped_outside_lock(self):
        a = np.array([-5.0, -1.21, 1.21, 2.0, 100.0])
        assert np.all(oscillator_z(a, RHO) == 0.0)

    def test_vectorized_shape(self):
        a = np.linspace(-2, 2, 12).reshape(3, 4)
        assert oscillator_z(a, RHO).shape == (3, 4)

    @given(st.floats(-10, 10, allow_nan=False))
    def test_symmetric(self, a):
        assert oscillator_z(a, RHO) == oscillator_z(-a, RHO)

    @given(st.floats(-10, 10, allow_nan=False), st.floats(0.05, 5.0))
    def test_range(self, a, rho):
        z = oscillator_z(a, rho)
        assert 0.0 <= z <= 1.0

    @given(st.floats(0.0, 1.19), st.floats(1e-4, 0.01))
    def test_decreasing_on_positive_lobe(self, a, d):
        b = min(a + d, 1.2)
        assert oscillator_z(b, RHO) < oscillator_z(a, RHO)

    def test_non_monotone_witness(self):
        z1, z2, z3 = oscillator_z(np.array([-0.9, 0.0, 0.9]), RHO)
        assert z1 < z2 > z3

    def test_continuous_at_clamp_boundary(self):
        edge = 1.0 / RHO
        inside = oscillator_z(edge * (1 - 1e-12), RHO)
        outside = oscillator_z(edge * (1 + 1e-12), RHO)
        assert abs(inside - outside) < 1e-5


class TestOscillatorDz:
    def test_zero_at_peak(self):
        assert oscillator_dz(0.0, RHO) == 0.0

    def test_zero_outside_and_at_edge(self):
        assert oscillator_dz(2.0, RHO) == 0.0
        assert oscillator_dz(1.2, RHO) == 0.0
        assert oscillator_dz(-1.2, RHO) == 0.0

    def test_closed_form_at_half_lock(self):
        # dz/da = -a rho^2 / (S r (2 - sqrt 2)), r = sqrt(1 - (a rho)^2)
        s = (math.sqrt(6) + SQ2) / 2
        r = math.sqrt(3) / 2
        want = -(0.6 * RHO**2) / (s * r * (2 - SQ2))
        assert oscillator_dz(0.6, RHO) == pytest.approx(want, rel=1e-14)

    def test_matches_finite_difference_at_half_lock(self):
        fd = central(lambda x: oscillator_z(x, RHO), 0.6, 1e-6)
        assert abs(oscillator_dz(0.6, RHO) - fd) / abs(fd) < 1e-6

    def test_random_finite_difference_sweep(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-0.95, 0.95, 1000) / RHO
        dz = oscillator_dz(a, RHO)
        fd = central(lambda x: oscillator_z(x, RHO), a, 1e-6)
        rel = np.abs(dz - fd) / np.maximum(np.abs(dz), 1e-12)
        # near a = 0 both vanish; compare absolutely there
        rel = np.where(np.abs(dz) < 1e-6, np.abs(dz - fd), rel)
        assert rel.max() < 1e-5

    @given(st.floats(-0.95, 0.95))
    def test_odd(self, u):
        a = u / RHO
        assert oscillator_dz(a, RHO) == pytest.approx(-oscillator_dz(-a, RHO), abs=1e-15)

    @given(st.floats(-50, 50, allow_nan=False))
    def test_always_finite(self, a):
        assert np.isfinite(oscillator_dz(a, RHO))


class TestBaselines:
    def test_sigmoid_midpoint(self):
        assert sigmoid_z(0.0) == 0.5
        for g in (0.5, 1.0, 3.0):
            assert sigmoid_dz(0.0, g) == pytest.approx(g / 4)

    def test_sigmoid_no_overflow(self):
        with np.errstate(over="raise"):
            z = sigmoid_z(np.array([-1000.0, 1000.0]))
        assert z[0] == pytest.approx(0.0) and z[1] == pytest.approx(1.0)

    @given(st.floats(-20, 20), st.floats(0.1, 4.0))
    def test_sigmoid_derivative(self, a, g):
        h = 1e-5
        fd = (sigmoid_z(a + h, g) - sigmoid_z(a - h, g)) / (2 * h)
        d = sigmoid_dz(a, g)
        # second term: round-off of the difference quotient, ~eps / h
        assert abs(d - fd) <= 1e-8 * abs(d) + 5e-11

    def test_threshold_step(self):
        eps = 1e-9
        for level in (-0.5, 0.0, 0.7):
            assert threshold_z(level + eps, level) == 1.0
            assert threshold_z(level - eps, level) == 0.0

    def test_threshold_has_no_gradient(self):
        with pytest.raises(TypeError):
            Threshold().dz(0.3)


class TestKinds:
    def test_from_pair_defaults(self):
        osc = Oscillator.from_pair(10e6, 6e6)
        assert osc.rho == pytest.approx(RHO)
        assert osc.lock_range == pytest.approx(1.2)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            Oscillator(0.0)
        with pytest.raises(ValueError):
            Sigmoid(gain=0.0)
        with pytest.raises(ValueError):
            make_activation("relu")

    @pytest.mark.parametrize("kind", [Oscillator(0.7), Sigmoid(2.0), Threshold(0.25)])
    def test_dict_round_trip(self, kind):
        assert activation_from_dict(activation_to_dict(kind)) == kind

    def test_kind_names(self):
        assert set(KIND_NAMES) == {"oscillator", "sigmoid", "threshold"}

    def test_training_slope_cap_and_recovery(self):
        osc = Oscillator(RHO)
        a = np.array([-1.5, -1.19, 0.0, 1.19, 1.5])
        plain = osc.training_dz(a, 2.0, recover=False)
        assert np.all(np.abs(plain) <= 2.0)
        assert plain[0] == 0.0 and plain[-1] == 0.0
        rec = osc.training_dz(a, 2.0, recover=True)
        assert rec[0] == 2.0 and rec[-1] == -2.0
        assert np.array_equal(rec[1:4], plain[1:4])


def test_activation_curve_rows():
    rows = activation_curve(-1.5, 1.5, 7, RHO)
    assert rows.shape == (7, 3)
    assert rows[3, 0] == 0.0 and rows[3, 1] == 1.0
    assert np.array_equal(rows[:, 1], oscillator_z(rows[:, 0], RHO))
    with pytest.raises(ValueError):
        activation_curve(0, 1, 1, RHO)
