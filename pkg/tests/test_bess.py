"""Storage unit checks: controller arithmetic, converter lag, charge limits."""

import math

import numpy as np
import pytest

from bessdamp.bess import (BessParams, BessState, bess_step,
                           controller_reference, initial_state, pcs_step,
                           soc_change_report, soc_update)


def params(**kw):
    base = dict(bus=5, k_es=50.0)
    base.update(kw)
    return BessParams(**base)


class TestController:
    def test_proportional_sign_and_scale(self):
        """A positive speed deviation orders charging."""
        p = params(k_es=50.0)
        assert controller_reference(0.002, p) == -0.1
        assert controller_reference(-0.002, p) == 0.1
        assert controller_reference(0.0, p) == 0.0

    def test_pi_combines_gain_and_integral(self):
        p = params(k_es=30.0, controller="pi", t_i=1.0)
        out = controller_reference(-0.01, p, integrator=0.005894)
        assert math.isclose(out, 0.305894), f"pi reference {out}"

    def test_pi_integral_time_scales(self):
        p = params(k_es=0.0, controller="pi", t_i=0.1)
        assert math.isclose(controller_reference(0.0, p, integrator=0.02),
                            0.2)


class TestConverterLag:
    def test_exact_exponential_step(self):
        """From rest, one step toward a held order follows 1 - exp(-dt/T)."""
        p = params(t_es=0.02)
        state = BessState(p_es=0.0, soc=0.5)
        nxt = pcs_step(state, 0.5, 0.005, p)
        expected = 0.5 * (1.0 - math.exp(-0.005 / 0.02))
        assert math.isclose(nxt.p_es, expected, rel_tol=1e-12), (
            f"lag step {nxt.p_es} vs {expected}")

    def test_converges_to_order(self):
        p = params(t_es=0.02)
        state = BessState(p_es=0.0, soc=0.5)
        for _ in range(200):
            state = pcs_step(state, 0.4, 0.005, p)
        assert abs(state.p_es - 0.4) < 1e-9

    def test_step_is_time_consistent(self):
        """Two half steps equal one full step for a held order."""
        p = params(t_es=0.05)
        full = pcs_step(BessState(p_es=0.1, soc=0.5), 0.8, 0.01, p)
        half = pcs_step(BessState(p_es=0.1, soc=0.5), 0.8, 0.005, p)
        half = pcs_step(BessState(p_es=half.p_es, soc=0.5), 0.8, 0.005, p)
        assert math.isclose(full.p_es, half.p_es, rel_tol=1e-12)

    def test_power_limit_clamps(self):
        p = params(p_max=0.3, t_es=0.001)
        state = BessState(p_es=0.0, soc=0.5)
        state = pcs_step(state, 5.0, 0.05, p)
        assert state.p_es == 0.3

    def test_zero_order_resets_output(self):
        p = params()
        state = BessState(p_es=0.7, soc=0.5)
        assert pcs_step(state, 0.0, 0.005, p).p_es == 0.0


class TestGating:
    def test_charge_blocked_at_soc_max(self):
        p = params(soc_max=0.9)
        state = BessState(p_es=-0.2, soc=0.9)
        nxt = pcs_step(state, -0.5, 0.005, p)
        assert nxt.p_es == 0.0, "full unit must refuse to charge"

    def test_discharge_blocked_at_soc_min(self):
        p = params(soc_min=0.1)
        state = BessState(p_es=0.2, soc=0.1)
        nxt = pcs_step(state, 0.5, 0.005, p)
        assert nxt.p_es == 0.0, "empty unit must refuse to discharge"

    def test_opposite_direction_still_allowed(self):
        p = params()
        full = BessState(p_es=0.0, soc=p.soc_max)
        assert pcs_step(full, 0.5, 0.005, p).p_es > 0.0
        empty = BessState(p_es=0.0, soc=p.soc_min)
        assert pcs_step(empty, -0.5, 0.005, p).p_es < 0.0

    def test_gating_fuzz_respects_limits(self):
        """Random orders never break the power limit and the state of
        charge stays inside [0, 1]."""
        rng = np.random.default_rng(11)
        p = params(p_max=0.5, e_total_mwh=0.05, t_es=0.01)
        state = initial_state(p)
        for _ in range(5000):
            state = pcs_step(state, float(rng.uniform(-3, 3)), 0.01, p)
            assert abs(state.p_es) <= 0.5 + 1e-15
            assert 0.0 <= state.soc <= 1.0


class TestSoc:
    def test_discharge_depletes(self):
        """0.5 p.u. for 60 s on a 10 MWh unit costs 1/120 of the charge."""
        soc = 0.5
        for _ in range(60):
            soc = soc_update(soc, 0.5, 1.0, 10.0)
        assert math.isclose(soc, 0.5 - 0.5 * 100.0 * 60 / 3600.0 / 10.0), (
            f"soc after constant discharge {soc}")

    def test_charge_raises_and_clamps(self):
        assert soc_update(0.999999, -5.0, 10.0, 0.001) == 1.0
        assert soc_update(0.000001, 5.0, 10.0, 0.001) == 0.0

    def test_report_constant_discharge(self):
        """0.06 p.u. held for 6 s is 0.01 MWh from a 10 MWh unit: -0.1%."""
        t = np.linspace(0.0, 6.0, 601)
        p_es = np.full_like(t, 0.06)
        pct = soc_change_report(t, p_es, params(e_total_mwh=10.0))
        assert math.isclose(pct, -0.1, rel_tol=1e-9), f"report {pct}"

    def test_report_sign_for_charging(self):
        t = np.linspace(0.0, 6.0, 601)
        pct = soc_change_report(t, np.full_like(t, -0.06), params())
        assert pct > 0.0

    def test_report_zero_mean_cycle(self):
        t = np.linspace(0.0, 2.0, 2001)
        pct = soc_change_report(t, np.sin(2 * np.pi * t), params())
        assert abs(pct) < 1e-6


class TestAntiWindup:
    def test_integrator_freezes_while_clamped(self):
        p = params(k_es=1.0, controller="pi", t_i=0.05, p_max=0.2,
                   t_es=0.001)
        state = initial_state(p)
        for _ in range(50):
            state = bess_step(state, -0.5, 0.01, p)
        assert state.p_es == pytest.approx(0.2)
        frozen = state.integrator
        state = bess_step(state, -0.5, 0.01, p)
        assert state.integrator == frozen, "integrator must hold at the limit"

    def test_integrator_runs_when_unsaturated(self):
        p = params(k_es=1.0, controller="pi", t_i=1.0)
        state = initial_state(p)
        nxt = bess_step(state, -0.01, 0.02, p)
        assert math.isclose(nxt.integrator, 0.01 * 0.02)

    def test_proportional_keeps_integrator_zero(self):
        p = params(k_es=10.0)
        state = initial_state(p)
        for _ in range(10):
            state = bess_step(state, -0.02, 0.01, p)
        assert state.integrator == 0.0


class TestValidation:
    def test_unknown_controller(self):
        with pytest.raises(ValueError):
            params(controller="droop")

    def test_soc_window(self):
        with pytest.raises(ValueError):
            params(soc_min=0.8, soc_max=0.8)

    def test_positive_time_constants(self):
        with pytest.raises(ValueError):
            params(t_es=0.0)
        with pytest.raises(ValueError):
            params(controller="pi", t_i=-1.0)

    def test_negative_gain(self):
        with pytest.raises(ValueError):
            params(k_es=-5.0)
