"""Modal estimator checks against synthetic signals with known content."""

import math

import numpy as np
import pytest

from bessdamp.modal import (EspritConfig, Mode, OrderError,
                            TargetModeMissing, damping_ratio, estimate_modes,
                            match_modes, select_target_mode)

DT = 0.02


def damped_cosine(freq, zeta, t, amplitude=1.0, phase=0.0):
    omega = 2 * math.pi * freq
    sigma = -zeta * omega / math.sqrt(1.0 - zeta * zeta)
    return amplitude * np.exp(sigma * t) * np.cos(omega * t + phase)


def time_axis(n=600, dt=DT):
    return np.arange(n) * dt


class TestSingleMode:
    def test_noiseless_recovery(self):
        """Frequency and damping of one clean decaying tone come back to
        near machine precision."""
        t = time_axis()
        y = damped_cosine(0.6, 0.05, t)
        modes = estimate_modes(y, DT, EspritConfig(window_start=0.0,
                                                   model_order=4))
        assert len(modes) >= 1
        m = modes[0]
        assert abs(m.freq_hz - 0.6) / 0.6 < 1e-6, f"freq {m.freq_hz}"
        assert abs(m.zeta - 0.05) / 0.05 < 1e-6, f"zeta {m.zeta}"

    def test_pure_sine_zero_damping(self):
        t = time_axis()
        y = np.sin(2 * np.pi * 1.2 * t)
        m = estimate_modes(y, DT, EspritConfig(window_start=0.0,
                                               model_order=4))[0]
        assert abs(m.zeta) < 1e-8, f"pure tone damping {m.zeta}"
        assert abs(m.freq_hz - 1.2) < 1e-8

    def test_growing_mode_negative_zeta(self):
        t = time_axis()
        y = damped_cosine(0.8, -0.03, t)
        modes = estimate_modes(y, DT, EspritConfig(window_start=0.0,
                                                   model_order=4))
        m = min(modes, key=lambda m: abs(m.freq_hz - 0.8))
        assert m.zeta < 0.0
        assert abs(m.zeta + 0.03) < 1e-6

    def test_amplitude_and_phase(self):
        t = time_axis()
        y = damped_cosine(0.5, 0.02, t, amplitude=2.5, phase=0.7)
        m = estimate_modes(y, DT, EspritConfig(window_start=0.0,
                                               model_order=4))[0]
        assert abs(m.amplitude - 2.5) < 1e-6
        # phase convention: y = amplitude * cos(w t + phase)
        assert abs(m.phase - 0.7) < 1e-6


class TestTwoModes:
    def test_separation_and_energy_order(self):
        """Two tones come back separately, strongest first."""
        t = time_axis(800)
        y = (damped_cosine(0.5, 0.04, t, amplitude=2.0)
             + damped_cosine(1.3, 0.10, t, amplitude=0.6))
        modes = estimate_modes(y, DT, EspritConfig(window_start=0.0,
                                                   model_order=6))
        assert len(modes) >= 2
        modes = modes[:2]
        assert modes[0].energy >= modes[1].energy
        freqs = sorted(m.freq_hz for m in modes)
        assert abs(freqs[0] - 0.5) < 1e-6 and abs(freqs[1] - 1.3) < 1e-5

    def test_energy_fractions_sum_to_one(self):
        t = time_axis(800)
        y = (damped_cosine(0.5, 0.04, t) + damped_cosine(1.3, 0.10, t))
        modes = estimate_modes(y, DT, EspritConfig(window_start=0.0,
                                                   model_order=4))
        assert math.isclose(sum(m.energy for m in modes), 1.0, rel_tol=1e-9)


class TestInvariances:
    def test_scaling_leaves_freq_zeta(self):
        t = time_axis()
        y = damped_cosine(0.7, 0.03, t)
        cfg = EspritConfig(window_start=0.0, model_order=4)
        base = estimate_modes(y, DT, cfg)[0]
        scaled = estimate_modes(5.0 * y, DT, cfg)[0]
        assert math.isclose(base.freq_hz, scaled.freq_hz, rel_tol=1e-12)
        assert math.isclose(base.zeta, scaled.zeta, rel_tol=1e-9)
        assert math.isclose(scaled.amplitude, 5.0 * base.amplitude,
                            rel_tol=1e-9)

    def test_offset_is_removed(self):
        t = time_axis()
        y = damped_cosine(0.7, 0.03, t)
        cfg = EspritConfig(window_start=0.0, model_order=4)
        base = estimate_modes(y, DT, cfg)[0]
        shifted = estimate_modes(y + 3.0, DT, cfg)[0]
        assert math.isclose(base.freq_hz, shifted.freq_hz, rel_tol=1e-6)
        assert math.isclose(base.zeta, shifted.zeta, rel_tol=1e-3)

    def test_window_start_skips_transient(self):
        t = time_axis(900)
        y = damped_cosine(0.6, 0.05, t)
        y[:100] += 5.0 * np.exp(-t[:100] / 0.05)
        cfg = EspritConfig(window_start=2.0, model_order=4)
        m = estimate_modes(y, DT, cfg)[0]
        assert abs(m.freq_hz - 0.6) / 0.6 < 1e-6


class TestEdgeCases:
    def test_zero_signal_gives_no_modes(self):
        assert estimate_modes(np.zeros(400), DT) == []

    def test_odd_order_rejected(self):
        t = time_axis()
        with pytest.raises(OrderError):
            estimate_modes(damped_cosine(0.6, 0.05, t), DT,
                           EspritConfig(window_start=0.0, model_order=3))

    def test_order_too_large_for_samples(self):
        with pytest.raises(OrderError):
            estimate_modes(np.random.default_rng(0).normal(size=30), DT,
                           EspritConfig(window_start=0.0, model_order=28))

    def test_auto_order_on_clean_pair(self):
        t = time_axis(800)
        y = (damped_cosine(0.5, 0.04, t) + damped_cosine(1.3, 0.10, t))
        modes = estimate_modes(y, DT, EspritConfig(window_start=0.0))
        freqs = sorted(m.freq_hz for m in modes)
        assert any(abs(f - 0.5) < 1e-3 for f in freqs)
        assert any(abs(f - 1.3) < 1e-3 for f in freqs)


class TestDampingRatio:
    def test_formula(self):
        assert math.isclose(damping_ratio(-1.0, 0.0), 1.0)
        assert math.isclose(damping_ratio(0.0, 5.0), 0.0)
        sigma, omega = -0.3, 4.0
        assert math.isclose(damping_ratio(sigma, omega),
                            0.3 / math.hypot(0.3, 4.0))

    def test_negative_for_growth(self):
        assert damping_ratio(0.2, 3.0) < 0.0

    def test_zero_pole_rejected(self):
        with pytest.raises(ValueError):
            damping_ratio(0.0, 0.0)


def mode(freq, zeta, energy):
    return Mode(freq_hz=freq, zeta=zeta, amplitude=1.0, phase=0.0,
                energy=energy)


class TestSelection:
    def test_highest_energy_in_band(self):
        modes = [mode(0.6, 0.01, 0.5), mode(0.7, 0.02, 0.3),
                 mode(1.4, 0.01, 0.2)]
        target = select_target_mode(modes, (0.4, 0.8))
        assert target.freq_hz == 0.6

    def test_missing_band_raises(self):
        with pytest.raises(TargetModeMissing):
            select_target_mode([mode(1.4, 0.01, 1.0)], (0.4, 0.8))

    def test_band_edges_inclusive(self):
        target = select_target_mode([mode(0.4, 0.01, 1.0)], (0.4, 0.8))
        assert target.freq_hz == 0.4


class TestMatching:
    def test_greedy_by_energy(self):
        """The strongest baseline mode claims its nearest partner first."""
        baseline = [mode(0.6, 0.01, 0.6), mode(1.0, 0.02, 0.3)]
        estimated = [mode(0.95, 0.03, 0.4), mode(0.58, 0.05, 0.6)]
        pairs = match_modes(baseline, estimated, f_tol=0.1)
        lookup = {b.freq_hz: m for b, m in pairs}
        assert lookup[0.6].freq_hz == 0.58
        assert lookup[1.0].freq_hz == 0.95

    def test_unmatched_is_none(self):
        pairs = match_modes([mode(0.6, 0.01, 1.0)], [mode(1.5, 0.02, 1.0)],
                            f_tol=0.1)
        assert pairs[0][1] is None

    def test_each_estimate_used_once(self):
        baseline = [mode(0.60, 0.01, 0.6), mode(0.62, 0.02, 0.4)]
        estimated = [mode(0.61, 0.03, 1.0)]
        pairs = match_modes(baseline, estimated, f_tol=0.1)
        matched = [m for _, m in pairs if m is not None]
        assert len(matched) == 1, "one estimate cannot serve two baselines"
