import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oscneuron import _accel
from oscneuron.activation import oscillator_z
from oscneuron.dynamics import (
    PairParams,
    PhaseState,
    SignalTrace,
    SimConfig,
    amplitude_to_z,
    analytic_output,
    dynamical_output,
    dynamical_outputs,
    estimate_linewidth,
    integrate_pair,
    kuramoto_rates,
    peak_detect,
    power_detect,
    task_key,
    task_rng,
)

P = PairParams()
FAST = SimConfig(duration=1.2e-6, settle_time=0.4e-6)


class TestParams:
    def test_defaults(self):
        assert P.rho == pytest.approx(5 / 6)
        assert P.lock_range() == pytest.approx(1.2)
        assert P.natural_frequencies(0.5) == (505e6, 500e6)

    def test_invalid(self):
        with pytest.raises(ValueError):
            PairParams(k=0.0)
        with pytest.raises(ValueError):
            PairParams(f_mid=10e6)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="under-resolves"):
            SimConfig(dt=1e-10).validate(P)
        with pytest.raises(ValueError):
            SimConfig(noise="pink").validate(P)
        with pytest.raises(ValueError):
            SimConfig(detector="mean").validate(P)
        with pytest.raises(ValueError):
            SimConfig(linewidth=-1).validate(P)
        with pytest.raises(ValueError):
            SimConfig(settle_time=3e-6).validate(P)
        with pytest.raises(ValueError):
            SimConfig(detector_decay=1e-9).validate(P)
        SimConfig().validate(P)

    def test_dt_bound_is_inclusive(self):
        SimConfig(dt=1.0 / (50 * 510e6)).validate(P)


class TestRates:
    def test_locked_fixed_point(self):
        # at sin(phi) = a*rho both oscillators run at the same frequency
        a = 0.6
        phi = math.asin(a * P.rho)
        r1, r2 = kuramoto_rates(PhaseState(phi, 0.0), a, P)
        assert r1 == pytest.approx(r2, rel=1e-15)
        assert r1 / (2 * math.pi) == pytest.approx(P.f_mid + a * P.f_amp / 2)

    def test_phase_difference_wrap(self):
        assert PhaseState(7.0, 0.0).phase_difference == pytest.approx(7.0 - 2 * math.pi)
        assert PhaseState(math.pi, 0.0).phase_difference == pytest.approx(math.pi)
        assert PhaseState(-math.pi, 0.0).phase_difference == pytest.approx(math.pi)


class TestPowerReadout:
    POWER = FAST.with_(detector="power")

    @pytest.mark.parametrize("a", [-1.0, -0.5, 0.0, 0.4, 1.1])
    def test_matches_analytic_in_lock(self, a):
        assert dynamical_output(a, P, self.POWER) == pytest.approx(float(oscillator_z(a, P.rho)), abs=0.01)

    @pytest.mark.parametrize("a", [-6.0, -2.0, 2.0, 10.0])
    def test_unlocked_reads_zero(self, a):
        # <cos phi> over a beat cycle vanishes, so the rms sits at sqrt(2);
        # the default window holds whole beats up to a small remainder
        cfg = SimConfig(detector="power")
        assert dynamical_output(a, P, cfg) == pytest.approx(0.0, abs=0.01)

    @pytest.mark.parametrize("a", [-1.4, 1.4])
    def test_near_edge_reads_low(self, a):
        # beat period is a sizeable part of the window here, so only a bound
        assert dynamical_output(a, P, self.POWER) < 0.1

    def test_trace_matches_batch(self):
        tr = integrate_pair(0.7, P, self.POWER)
        z = amplitude_to_z(power_detect(tr))
        assert z == pytest.approx(dynamical_output(0.7, P, self.POWER), abs=1e-9)

    def test_pure_tone(self):
        # 40 whole cycles, the last 20 in the window
        t = 2 * np.pi * np.arange(4000) / 100
        tr = SignalTrace(1.7 * np.sin(t), 100.0, t, t)
        assert power_detect(tr) == pytest.approx(1.7, rel=1e-12)

    def test_backends_agree_with_noise(self):
        a = np.array([-0.8, 0.1, 1.6])
        cfg = self.POWER.with_(duration=0.8e-6, linewidth=1e6, noise="binary")
        zn = dynamical_outputs(a, P, cfg, use_numba=True)
        zp = dynamical_outputs(a, P, cfg, use_numba=False)
        np.testing.assert_allclose(zn, zp, atol=1e-9)


class TestNoiseless:
    @pytest.mark.parametrize("a", [-1.0, -0.6, 0.0, 0.3, 0.9])
    def test_matches_analytic(self, a):
        assert dynamical_output(a, P, FAST) == pytest.approx(float(oscillator_z(a, P.rho)), abs=0.01)

    def test_trace_settles_to_locked_phase(self):
        a = 0.6
        tr = integrate_pair(a, P, FAST)
        phi = PhaseState(tr.theta1[-1], tr.theta2[-1]).phase_difference
        assert phi == pytest.approx(math.asin(a * P.rho), abs=1e-3)
        assert tr.samples.size == FAST.n_steps - FAST.settle_steps
        assert np.max(tr.samples) == pytest.approx(2 * math.cos(phi / 2), abs=1e-3)

    def test_peak_detect_on_trace_matches_batch(self):
        tr = integrate_pair(-0.4, P, FAST)
        s_hat = peak_detect(tr, FAST.detector_decay)
        assert amplitude_to_z(s_hat) == pytest.approx(dynamical_output(-0.4, P, FAST), abs=1e-9)

    def test_peak_detect_rejects_short_trace(self):
        tr = SignalTrace(np.zeros(100), 1 / 20e-12, np.zeros(100), np.zeros(100))
        with pytest.raises(ValueError, match="10 detector decays"):
            peak_detect(tr, 40e-9)

    def test_trace_csv(self, tmp_path):
        tr = integrate_pair(0.2, P, FAST.with_(duration=0.8e-6))
        tr.to_csv(tmp_path / "t.csv")
        data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
        assert data.shape == (tr.samples.size, 4)
        assert (tmp_path / "t.csv").read_text().startswith("t,signal,theta1,theta2\n")

    def test_numpy_backend_agrees(self):
        a = np.array([-0.8, 0.1, 0.7])
        cfg = FAST.with_(duration=0.8e-6)
        zn = dynamical_outputs(a, P, cfg, use_numba=True)
        zp = dynamical_outputs(a, P, cfg, use_numba=False)
        np.testing.assert_allclose(zn, zp, atol=1e-9)


class TestNoise:
    @pytest.mark.parametrize("noise", ["gaussian", "binary"])
    def test_free_phase_variance(self, noise):
        # with coupling off each phase diffuses: Var = 2 pi linewidth t
        from oscneuron.dynamics import _run_batch

        cfg = SimConfig(linewidth=1e5, duration=1e-6, noise=noise)
        st, _ = _run_batch(np.zeros(300), P, cfg, [(i,) for i in range(300)], coupling=0.0)
        dev = st[:2] - 2 * math.pi * cfg.n_steps * cfg.dt * P.f_mid
        want = 2 * math.pi * 1e5 * cfg.duration
        # 600 samples: relative std of a variance estimate is about 6%
        assert dev.var() == pytest.approx(want, rel=0.2)

    @pytest.mark.parametrize("noise", ["gaussian", "binary"])
    def test_independent_of_block_and_threads(self, noise):
        cfg = FAST.with_(linewidth=1e6, noise=noise, duration=0.8e-6)
        a = np.linspace(-1, 1, 9)
        keys = [(3, i) for i in range(9)]
        z1 = dynamical_outputs(a, P, cfg, keys, block=9)
        z2 = dynamical_outputs(a, P, cfg, keys, block=2)
        _accel.set_threads(3)
        try:
            z3 = dynamical_outputs(a, P, cfg, keys, block=4)
        finally:
            _accel.set_threads(1)
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_array_equal(z1, z3)

    def test_seed_changes_noise(self):
        cfg = FAST.with_(linewidth=1e6, noise="binary", duration=0.8e-6)
        a = np.full(4, 0.5)
        assert not np.array_equal(dynamical_outputs(a, P, cfg), dynamical_outputs(a, P, cfg.with_(seed=1)))

    def test_task_streams(self):
        assert task_key(0, (1, 2)) == task_key(0, (1, 2))
        assert task_key(0, (1, 2)) != task_key(0, (2, 1))
        x = task_rng(5, (0,)).standard_normal(3)
        np.testing.assert_array_equal(x, task_rng(5, (0,)).standard_normal(3))

    def test_linewidth_recovery(self):
        est = estimate_linewidth(P, SimConfig(linewidth=1e6, duration=20e-6), n_paths=4)
        assert est == pytest.approx(1e6, rel=0.25)

    def test_linewidth_needs_long_run(self):
        with pytest.raises(ValueError, match="too short"):
            estimate_linewidth(P, SimConfig(linewidth=1e5, duration=2e-6))


def test_output_needs_window():
    with pytest.raises(ValueError):
        dynamical_outputs([0.0], P, SimConfig(duration=0.6e-6, settle_time=0.5e-6))
    with pytest.raises(ValueError):
        dynamical_outputs([0.0, 1.0], P, FAST, keys=[(0,)])


@given(st.floats(0.0, 2.0))
def test_amplitude_to_z_range(s):
    z = amplitude_to_z(s)
    assert 0.0 <= z <= 1.0


def test_analytic_output_is_activation():
    a = np.linspace(-2, 2, 9)
    np.testing.assert_array_equal(analytic_output(a, P), oscillator_z(a, P.rho))
